//! Model file: little-endian, magic `LFBM`, version, bits, dimension,
//! constraint flag and vertical layout, then per component the weight, the
//! mean and the covariance payload (upper triangle for full covariances, the
//! spectral vector for Toeplitz ones).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{CovarianceRepr, GmmModel};
use crate::error::{invalid, FormatError, Result};
use crate::linalg::{CMatrix, CVector, C64};

pub const MODEL_MAGIC: [u8; 4] = *b"LFBM";
pub const MODEL_VERSION: u16 = 1;

const FLAG_FULL: u8 = 0;
const FLAG_TOEPLITZ: u8 = 1;

pub fn write_model<W: Write>(mut w: W, model: &GmmModel) -> Result<()> {
    let bits = match model.bits() {
        Some(b) => b,
        None => return invalid(format!("component count {} is not a power of two", model.num_components())),
    };
    let n = model.dim();
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&[bits])?;
    w.write_all(&(n as u32).to_le_bytes())?;
    let flag = match model.constraint() {
        super::Constraint::Full => FLAG_FULL,
        super::Constraint::Toeplitz => FLAG_TOEPLITZ,
    };
    w.write_all(&[flag])?;
    w.write_all(&(model.n_vert() as u32).to_le_bytes())?;
    for c in model.components() {
        w.write_all(&c.weight.to_le_bytes())?;
        for x in c.mean.iter() {
            write_c64(&mut w, *x)?;
        }
        match &c.covariance {
            CovarianceRepr::Full(m) => {
                for i in 0..n {
                    for j in i..n {
                        write_c64(&mut w, m[(i, j)])?;
                    }
                }
            }
            CovarianceRepr::Spectral(s) => {
                for v in s.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_c64<W: Write>(w: &mut W, x: C64) -> std::io::Result<()> {
    w.write_all(&x.re.to_le_bytes())?;
    w.write_all(&x.im.to_le_bytes())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(FormatError::Truncated { expected: (self.pos + len) as u64, found: self.buf.len() as u64 }.into());
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn c64(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }
}

pub fn read_model<R: Read>(mut r: R) -> Result<GmmModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 4 {
        return Err(FormatError::MalformedHeader("file too short for a header".into()).into());
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(FormatError::BadMagic { expected: MODEL_MAGIC, found: magic }.into());
    }
    let mut cur = Cursor { buf: &buf, pos: 4 };
    let header = cur
        .take(2 + 1 + 4 + 1 + 4)
        .map_err(|_| FormatError::MalformedHeader("incomplete header".into()))?;
    let version = u16::from_le_bytes([header[0], header[1]]);
    if version != MODEL_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let bits = header[2];
    let n = u32::from_le_bytes(header[3..7].try_into().unwrap()) as usize;
    let flag = header[7];
    let n_vert = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if bits > 16 {
        return Err(FormatError::MalformedHeader(format!("{bits} feedback bits is out of range")).into());
    }
    if n == 0 || n_vert == 0 || !n.is_multiple_of(n_vert) {
        return Err(FormatError::DimensionMismatch(format!("dimension {n} is not a multiple of vertical size {n_vert}")).into());
    }
    if flag != FLAG_FULL && flag != FLAG_TOEPLITZ {
        return Err(FormatError::MalformedHeader(format!("unknown constraint flag {flag}")).into());
    }
    let k = 1usize << bits;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        weights.push(cur.f64()?);
        let mut mean = CVector::zeros(n);
        for i in 0..n {
            mean[i] = cur.c64()?;
        }
        means.push(mean);
        if flag == FLAG_FULL {
            let mut m = CMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = cur.c64()?;
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
            }
            covs.push(CovarianceRepr::Full(m));
        } else {
            let mut s = DVector::zeros(4 * n);
            for i in 0..4 * n {
                s[i] = cur.f64()?;
            }
            covs.push(CovarianceRepr::Spectral(s));
        }
    }
    if cur.pos != buf.len() {
        return Err(FormatError::DimensionMismatch(format!("{} trailing bytes after the last component", buf.len() - cur.pos)).into());
    }
    GmmModel::new(weights, means, covs, n_vert, n / n_vert)
}

pub fn save_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    read_model(BufReader::new(File::open(path)?))
}
