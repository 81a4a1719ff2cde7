//! 2D-DFT codebooks built from under- or oversampled DFT factors.

use super::{Estimator, FeedbackReport, SchemeTag};
use crate::error::{invalid, Result};
use crate::linalg::{dft_columns, kron, CMatrix, CVector};
use crate::scene::ArrayGeometry;

#[derive(Debug, Clone)]
pub struct Codebook {
    /// `N x K`, unit-norm columns.
    entries: CMatrix,
    pub beams_vert: usize,
    pub beams_horiz: usize,
    pub n_vert: usize,
    pub n_horiz: usize,
    pub bits: u32,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> CVector {
        self.entries.column(i).into_owned()
    }

    /// `(S_v, S_h)`: beams per antenna in each dimension.
    pub fn oversampling(&self) -> (f64, f64) {
        (self.beams_vert as f64 / self.n_vert as f64, self.beams_horiz as f64 / self.n_horiz as f64)
    }
}

/// Beam counts `(vertical, horizontal)` with product `2^bits`.
///
/// Starting from one beam per antenna, extra beams go to the horizontal
/// dimension first; missing beams are taken from the vertical dimension
/// first.
pub fn beam_allocation(geometry: &ArrayGeometry, bits: u32) -> Result<(usize, usize)> {
    if bits >= usize::BITS - 1 {
        return invalid(format!("{bits} feedback bits is out of range"));
    }
    let k = 1usize << bits;
    let (nv, nh) = (geometry.n_vert, geometry.n_horiz);
    let n = nv * nh;
    let attempt = if k >= n {
        (nv, k / nv)
    } else if k >= nh {
        (k / nh, nh)
    } else {
        (1, k)
    };
    if attempt.0 * attempt.1 != k {
        return invalid(format!(
            "cannot split K = {k} beams over a {nv}x{nh} array: attempted {}x{} = {}",
            attempt.0,
            attempt.1,
            attempt.0 * attempt.1
        ));
    }
    Ok(attempt)
}

pub fn build_dft_codebook(geometry: &ArrayGeometry, bits: u32) -> Result<Codebook> {
    geometry.validate()?;
    let (bv, bh) = beam_allocation(geometry, bits)?;
    let fv = dft_columns(geometry.n_vert, bv, bv);
    let fh = dft_columns(geometry.n_horiz, bh, bh);
    Ok(Codebook {
        entries: kron(&fv, &fh),
        beams_vert: bv,
        beams_horiz: bh,
        n_vert: geometry.n_vert,
        n_horiz: geometry.n_horiz,
        bits,
    })
}

/// Entry with the largest `|c_k^H h|`; the smallest index wins ties. An
/// all-zero estimate selects entry 0 and is flagged degenerate.
pub fn select_codebook_index(codebook: &Codebook, h_hat: &CVector) -> Result<FeedbackReport> {
    if h_hat.len() != codebook.dim() {
        return invalid(format!("estimate has dimension {}, codebook expects {}", h_hat.len(), codebook.dim()));
    }
    let scheme = SchemeTag::Dft(Estimator::Perfect);
    if h_hat.iter().all(|x| *x == num_complex::Complex64::new(0.0, 0.0)) {
        return Ok(FeedbackReport { user: 0, index: 0, scheme, degenerate: true });
    }
    let corr = codebook.entries.ad_mul(h_hat);
    let mut best = 0;
    let mut best_mag = corr[0].norm_sqr();
    for (i, c) in corr.iter().enumerate().skip(1) {
        let mag = c.norm_sqr();
        if mag > best_mag {
            best = i;
            best_mag = mag;
        }
    }
    Ok(FeedbackReport { user: 0, index: best, scheme, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, real};
    use crate::rng::{complex_normal_vector, rng_from};

    #[test]
    fn paper_array_six_bits_is_square_dft() {
        let g = ArrayGeometry::paper_scale();
        let cb = build_dft_codebook(&g, 6).unwrap();
        assert_eq!(cb.len(), 64);
        assert_eq!(cb.oversampling(), (1.0, 1.0));
        let gram = cb.entries().adjoint() * cb.entries();
        assert!((gram - CMatrix::identity(64, 64)).norm() < 1e-10);
    }

    #[test]
    fn allocation_enumeration_for_eight_bits() {
        let g = ArrayGeometry::paper_scale();
        // Horizontal-first: keep 4 vertical beams, push the rest horizontally.
        assert_eq!(beam_allocation(&g, 8).unwrap(), (4, 64));
        let cb = build_dft_codebook(&g, 8).unwrap();
        assert_eq!(cb.len(), 256);
        assert_eq!(cb.oversampling(), (1.0, 4.0));
        // Vertical-first undersampling.
        assert_eq!(beam_allocation(&g, 4).unwrap(), (1, 16));
        assert_eq!(beam_allocation(&g, 2).unwrap(), (1, 4));
        assert_eq!(beam_allocation(&ArrayGeometry::desk_scale(), 4).unwrap(), (2, 8));
    }

    #[test]
    fn infeasible_allocation_reports_attempt() {
        let g = ArrayGeometry::new(3, 5, 1.0, 0.5).unwrap();
        let err = build_dft_codebook(&g, 4).unwrap_err().to_string();
        assert!(err.contains("attempted"), "{err}");
    }

    #[test]
    fn entries_are_unit_norm() {
        for (g, b) in [(ArrayGeometry::paper_scale(), 4), (ArrayGeometry::paper_scale(), 8), (ArrayGeometry::desk_scale(), 6)] {
            let cb = build_dft_codebook(&g, b).unwrap();
            for i in 0..cb.len() {
                assert!((cb.entry(i).norm() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn self_match_and_degenerate() {
        let cb = build_dft_codebook(&ArrayGeometry::desk_scale(), 4).unwrap();
        assert_eq!(select_codebook_index(&cb, &cb.entry(3)).unwrap().index, 3);
        let zero = select_codebook_index(&cb, &CVector::zeros(16)).unwrap();
        assert_eq!(zero.index, 0);
        assert!(zero.degenerate);
    }

    #[test]
    fn unique_correlator_selected() {
        // With S = 1 the entries are orthonormal, so entry 1 correlates only with itself.
        let cb = build_dft_codebook(&ArrayGeometry::desk_scale(), 4).unwrap();
        let h = cb.entry(1) * c64(0.0, -2.5);
        assert_eq!(select_codebook_index(&cb, &h).unwrap().index, 1);
    }

    #[test]
    fn exhaustive_scan_oracle() {
        let g = ArrayGeometry::new(2, 8, 1.0, 0.5).unwrap();
        let cb = build_dft_codebook(&g, 4).unwrap();
        let mut rng = rng_from(12);
        for _ in 0..200 {
            let h = complex_normal_vector(&mut rng, 16);
            let mags: Vec<f64> = (0..16).map(|i| cb.entry(i).dotc(&h).norm()).collect();
            let mut best = 0;
            for i in 0..16 {
                if mags[i] > mags[best] {
                    best = i;
                }
            }
            assert_eq!(select_codebook_index(&cb, &h).unwrap().index, best);
            assert_eq!(select_codebook_index(&cb, &(h * real(3.7))).unwrap().index, best);
        }
    }
}
