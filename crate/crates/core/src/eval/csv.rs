use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Axis;
use super::harness::SweepResult;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::scene::{write_dataset, ChannelDataset};

fn format_axis(axis: Axis, v: f64) -> String {
    if axis.is_integer() {
        format!("{}", v as u64)
    } else {
        format!("{v}")
    }
}

/// Header `axis,<scheme>_mean,<scheme>_se,...` and one row per axis value.
/// Statistics are printed with 17 significant digits.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    let mut header = vec![result.axis.name().to_string()];
    for s in &result.schemes {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_se"));
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, &v) in result.values.iter().enumerate() {
        let mut row = vec![format_axis(result.axis, v)];
        for s in 0..result.schemes.len() {
            row.push(format!("{:.16e}", result.mean[i][s]));
            row.push(format!("{:.16e}", result.se[i][s]));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(result, &mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub axis: String,
    pub schemes: Vec<String>,
    pub values: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let bad = |msg: String| Error::Config(format!("csv: {msg}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    if !(header.len() - 1).is_multiple_of(2) {
        return Err(bad("expected mean/se column pairs".into()));
    }
    let mut schemes = Vec::new();
    for pair in header[1..].chunks(2) {
        let name = pair[0].strip_suffix("_mean").ok_or_else(|| bad(format!("column {:?}", pair[0])))?;
        if pair[1] != format!("{name}_se") {
            return Err(bad(format!("column {:?} does not pair with {:?}", pair[1], pair[0])));
        }
        schemes.push(name.to_string());
    }
    let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("number {s:?}")));
    let (mut values, mut mean, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(format!("row has {} cells, header has {}", cells.len(), header.len())));
        }
        values.push(parse(cells[0])?);
        mean.push(cells[1..].iter().step_by(2).map(|c| parse(c)).collect::<Result<Vec<_>>>()?);
        se.push(cells[2..].iter().step_by(2).map(|c| parse(c)).collect::<Result<Vec<_>>>()?);
    }
    Ok(ParsedCsv { axis: header[0].to_string(), schemes, values, mean, se })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DumpHeader {
    axis: String,
    schemes: Vec<String>,
    values: Vec<f64>,
    num_constellations: usize,
    config_hash: String,
    seed: u64,
}

/// One constellation of one sweep point; `None` marks a scheme that did not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub point: usize,
    pub axis_value: f64,
    pub constellation: usize,
    pub rates: Vec<Option<f64>>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".jsonl");
    PathBuf::from(name)
}

/// Writes per-constellation rates as a dataset container (one "sample" per
/// constellation and point, one entry per scheme, rate in the real part) and
/// a JSON-lines sidecar `<path>.jsonl` with full-precision values. Returns
/// the sidecar path.
pub fn write_raw_dump(result: &SweepResult, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    if result.schemes.is_empty() {
        return Err(Error::InvalidInput("raw dump needs at least one scheme".into()));
    }
    let samples = result
        .raw
        .iter()
        .flatten()
        .map(|rates| rates.iter().map(|&r| C64::new(r, 0.0)).collect::<Vec<_>>().into())
        .collect();
    let dataset = ChannelDataset::new(samples, false)?;
    write_dataset(BufWriter::new(File::create(path)?), &dataset)?;

    let side = sidecar(path);
    let mut out = BufWriter::new(File::create(&side)?);
    let header = DumpHeader {
        axis: result.axis.name().to_string(),
        schemes: result.schemes.clone(),
        values: result.values.clone(),
        num_constellations: result.raw.first().map_or(0, |r| r.len()),
        config_hash: result.metadata.config_hash.clone(),
        seed: result.metadata.seed,
    };
    let to_io = |e: serde_json::Error| Error::Io(e.into());
    writeln!(out, "{}", serde_json::to_string(&header).map_err(to_io)?)?;
    for (point, per_point) in result.raw.iter().enumerate() {
        for (constellation, rates) in per_point.iter().enumerate() {
            let record = RawRecord {
                point,
                axis_value: result.values[point],
                constellation,
                rates: rates.iter().map(|r| r.is_finite().then_some(*r)).collect(),
            };
            writeln!(out, "{}", serde_json::to_string(&record).map_err(to_io)?)?;
        }
    }
    out.flush()?;
    Ok(side)
}

/// Reads the records of a JSON-lines sidecar, returning the scheme names and records.
pub fn read_raw_dump(sidecar_path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<RawRecord>)> {
    let reader = BufReader::new(File::open(sidecar_path)?);
    let mut lines = reader.lines();
    let to_cfg = |e: serde_json::Error| Error::Config(format!("raw dump: {e}"));
    let first = lines.next().ok_or_else(|| Error::Config("raw dump: empty sidecar".into()))??;
    let header: DumpHeader = serde_json::from_str(&first).map_err(to_cfg)?;
    let mut records = Vec::new();
    for line in lines {
        records.push(serde_json::from_str(&line?).map_err(to_cfg)?);
    }
    Ok((header.schemes, records))
}

#[cfg(test)]
mod tests {
    use super::super::harness::SweepMetadata;
    use super::*;

    fn result(schemes: usize) -> SweepResult {
        let names: Vec<String> = (0..schemes).map(|s| format!("s{s}")).collect();
        SweepResult {
            axis: Axis::Pilots,
            values: vec![2.0, 4.0],
            schemes: names,
            mean: vec![vec![1.0 / 3.0; schemes], vec![2.5; schemes]],
            se: vec![vec![0.1; schemes], vec![std::f64::consts::PI; schemes]],
            raw: vec![vec![vec![1.0; schemes]; 3]; 2],
            metadata: SweepMetadata { config_hash: "h".into(), seed: 3, runtime_secs: 0.0, errors: vec![] },
        }
    }

    #[test]
    fn empty_scheme_list_gives_axis_column_only() {
        let mut buf = Vec::new();
        write_csv(&result(0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "pilots");
        assert_eq!(text.lines().nth(1).unwrap(), "2");
    }

    #[test]
    fn round_trip_recovers_values_exactly() {
        let r = result(2);
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let parsed = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.schemes, r.schemes);
        assert_eq!(parsed.values, r.values);
        assert_eq!(parsed.mean, r.mean);
        assert_eq!(parsed.se, r.se);
    }

    #[test]
    fn raw_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = result(2);
        r.raw[1][2][1] = f64::NAN;
        r.raw[0][0][0] = 0.1 + 0.2;
        let side = write_raw_dump(&r, dir.path().join("raw.lfbd")).unwrap();
        let (schemes, records) = read_raw_dump(side).unwrap();
        assert_eq!(schemes, r.schemes);
        assert_eq!(records.len(), 6);
        assert_eq!(records[0].rates[0], Some(0.1 + 0.2));
        assert_eq!(records[5].rates[1], None);
        let ds = crate::scene::load_dataset(dir.path().join("raw.lfbd")).unwrap();
        assert_eq!((ds.len(), ds.dim()), (6, 2));
    }
}
