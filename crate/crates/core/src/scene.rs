//! Synthetic channel scenes for a uniform rectangular array.
//!
//! A scene is a fixed set of scattering clusters around the base station.
//! Each channel sample draws a few of those clusters and superimposes
//! Gaussian-perturbed propagation paths with complex Gaussian gains. The
//! resulting dataset carries the spatial correlation a data-aided feedback
//! scheme can learn, without claiming fidelity to any measured site.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, FormatError, Result};
use crate::linalg::{kron_vec, CVector, C64};
use crate::rng::{complex_normal, derived_rng, stream};

/// Antenna layout of the base-station array. Element `(v, h)` sits at flat
/// index `v * n_horiz + h`, which makes array responses Kronecker products of
/// a vertical and a horizontal factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_vert: usize,
    pub n_horiz: usize,
    /// Vertical element spacing in wavelengths.
    pub spacing_vert: f64,
    /// Horizontal element spacing in wavelengths.
    pub spacing_horiz: f64,
}

impl ArrayGeometry {
    pub fn new(n_vert: usize, n_horiz: usize, spacing_vert: f64, spacing_horiz: f64) -> Result<Self> {
        let g = ArrayGeometry { n_vert, n_horiz, spacing_vert, spacing_horiz };
        g.validate()?;
        Ok(g)
    }

    /// 4 x 16 array, half-wavelength horizontal and full-wavelength vertical spacing.
    pub fn paper_scale() -> Self {
        ArrayGeometry { n_vert: 4, n_horiz: 16, spacing_vert: 1.0, spacing_horiz: 0.5 }
    }

    /// 2 x 8 array with the same spacings, for fast runs.
    pub fn desk_scale() -> Self {
        ArrayGeometry { n_vert: 2, n_horiz: 8, spacing_vert: 1.0, spacing_horiz: 0.5 }
    }

    pub fn num_antennas(&self) -> usize {
        self.n_vert * self.n_horiz
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vert == 0 || self.n_horiz == 0 {
            return invalid(format!("array dimensions must be positive, got {}x{}", self.n_vert, self.n_horiz));
        }
        if !(self.spacing_vert > 0.0 && self.spacing_horiz > 0.0) || !self.spacing_vert.is_finite() || !self.spacing_horiz.is_finite() {
            return invalid("element spacings must be positive and finite");
        }
        Ok(())
    }
}

/// Response of a uniform linear array of `n` elements with spacing `spacing`
/// (wavelengths) to a plane wave with direction cosine `cosine`.
pub fn ula_response(n: usize, spacing: f64, cosine: f64) -> CVector {
    CVector::from_fn(n, |i, _| C64::from_polar(1.0, 2.0 * PI * spacing * i as f64 * cosine))
}

/// Array response `a_vert ⊗ a_horiz`. Elevation is measured from the array
/// broadside plane, azimuth from the array normal. The vertical direction
/// cosine is `sin(elevation)`, the horizontal one `cos(elevation) sin(azimuth)`.
pub fn steering_vector(geometry: &ArrayGeometry, elevation: f64, azimuth: f64) -> CVector {
    let vert = ula_response(geometry.n_vert, geometry.spacing_vert, elevation.sin());
    let horiz = ula_response(geometry.n_horiz, geometry.spacing_horiz, elevation.cos() * azimuth.sin());
    kron_vec(&vert, &horiz)
}

/// Parameters of the synthetic cluster scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub geometry: ArrayGeometry,
    /// Number of scattering clusters in the scene.
    pub num_clusters: usize,
    pub paths_per_cluster: usize,
    /// Standard deviation of path azimuths around their cluster center (rad).
    pub azimuth_spread: f64,
    /// Standard deviation of path elevations around their cluster center (rad).
    pub elevation_spread: f64,
    pub seed: u64,
    /// Cluster centers are uniform in `[-azimuth_sector, azimuth_sector]`.
    pub azimuth_sector: f64,
    /// Cluster elevation centers are uniform in `[elevation_min, elevation_max]`.
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Distinct clusters superimposed in every sample.
    pub clusters_per_sample: usize,
    /// Standard deviation (dB) of the log-normal power of each cluster.
    pub cluster_shadowing_db: f64,
}

impl SceneConfig {
    /// Urban-micro-like scene: wide horizontal and narrow vertical spread.
    pub fn umi(geometry: ArrayGeometry, seed: u64) -> Self {
        SceneConfig {
            geometry,
            num_clusters: 16,
            paths_per_cluster: 10,
            azimuth_spread: 6f64.to_radians(),
            elevation_spread: 2f64.to_radians(),
            seed,
            azimuth_sector: 60f64.to_radians(),
            elevation_min: -15f64.to_radians(),
            elevation_max: 5f64.to_radians(),
            clusters_per_sample: 1,
            cluster_shadowing_db: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.num_clusters == 0 || self.paths_per_cluster == 0 {
            return invalid("scene needs at least one cluster and one path per cluster");
        }
        if self.clusters_per_sample == 0 || self.clusters_per_sample > self.num_clusters {
            return invalid(format!(
                "clusters_per_sample must lie in 1..={}, got {}",
                self.num_clusters, self.clusters_per_sample
            ));
        }
        for (name, v) in [("azimuth_spread", self.azimuth_spread), ("elevation_spread", self.elevation_spread)] {
            if !(0.0..PI).contains(&v) {
                return invalid(format!("{name} must lie in [0, pi), got {v}"));
            }
        }
        if !(self.azimuth_sector >= 0.0 && self.elevation_max >= self.elevation_min) {
            return invalid("angular sector bounds are inconsistent");
        }
        if !(self.cluster_shadowing_db >= 0.0) {
            return invalid("cluster_shadowing_db must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cluster {
    elevation: f64,
    azimuth: f64,
    power: f64,
}

fn draw_clusters(config: &SceneConfig) -> Vec<Cluster> {
    let mut rng = derived_rng(config.seed, stream::SCENE, 0);
    (0..config.num_clusters)
        .map(|_| {
            let azimuth = rng.random_range(-1.0..=1.0) * config.azimuth_sector;
            let elevation = config.elevation_min + rng.random::<f64>() * (config.elevation_max - config.elevation_min);
            let shadow: f64 = rng.sample(StandardNormal);
            let power = 10f64.powf(config.cluster_shadowing_db * shadow / 10.0);
            Cluster { elevation, azimuth, power }
        })
        .collect()
}

/// A set of channel vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub samples: Vec<CVector>,
    /// Scene that produced the samples; unknown for datasets read from disk.
    pub scene: Option<SceneConfig>,
    pub normalized: bool,
}

impl ChannelDataset {
    pub fn new(samples: Vec<CVector>, normalized: bool) -> Result<Self> {
        let ds = ChannelDataset { samples, scene: None, normalized };
        ds.check_dimensions()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Channel dimension, zero for an empty dataset.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn mean_power(&self) -> f64 {
        let total: f64 = self.samples.iter().map(|s| s.norm_squared()).sum();
        total / self.samples.len() as f64
    }

    fn check_dimensions(&self) -> Result<()> {
        let n = self.dim();
        if let Some(bad) = self.samples.iter().position(|s| s.len() != n) {
            return Err(FormatError::DimensionMismatch(format!(
                "sample {bad} has dimension {}, expected {n}",
                self.samples[bad].len()
            ))
            .into());
        }
        Ok(())
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (ChannelDataset, ChannelDataset) {
        let n = n.min(self.len());
        let head = ChannelDataset { samples: self.samples[..n].to_vec(), scene: self.scene.clone(), normalized: self.normalized };
        let tail = ChannelDataset { samples: self.samples[n..].to_vec(), scene: self.scene.clone(), normalized: self.normalized };
        (head, tail)
    }
}

fn round_to_f32(v: &mut CVector) {
    for x in v.iter_mut() {
        *x = C64::new(x.re as f32 as f64, x.im as f32 as f64);
    }
}

fn generate_sample(config: &SceneConfig, clusters: &[Cluster], index: u64) -> CVector {
    let g = &config.geometry;
    let mut rng = derived_rng(config.seed, stream::SAMPLE, index);
    let mut h = CVector::zeros(g.num_antennas());
    let picked = sample_indices(&mut rng, clusters.len(), config.clusters_per_sample);
    for c in picked.iter().map(|i| clusters[i]) {
        let gain_std = (c.power / config.paths_per_cluster as f64).sqrt();
        for _ in 0..config.paths_per_cluster {
            let d_el: f64 = rng.sample(StandardNormal);
            let d_az: f64 = rng.sample(StandardNormal);
            let el = c.elevation + config.elevation_spread * d_el;
            let az = c.azimuth + config.azimuth_spread * d_az;
            let gain = complex_normal(&mut rng) * gain_std;
            h.axpy(gain, &steering_vector(g, el, az), C64::new(1.0, 0.0));
        }
    }
    // Samples are kept at the precision of the on-disk container.
    round_to_f32(&mut h);
    h
}

/// Draws `count` channels from the scene. Sample `i` depends only on
/// `(config, i)`, so any prefix of a larger draw is reproduced exactly.
pub fn generate_channels(config: &SceneConfig, count: usize) -> Result<ChannelDataset> {
    config.validate()?;
    if count == 0 {
        return invalid("channel count must be at least 1");
    }
    let clusters = draw_clusters(config);
    let samples: Vec<CVector> = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_sample(config, &clusters, i))
        .collect();
    Ok(ChannelDataset { samples, scene: Some(config.clone()), normalized: false })
}

/// Rescales every sample by one global factor so the mean of `|h|^2` is `N`.
pub fn normalize_dataset(dataset: &ChannelDataset) -> Result<ChannelDataset> {
    if dataset.is_empty() {
        return invalid("cannot normalize an empty dataset");
    }
    let mean = dataset.mean_power();
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::NumericalDomain(format!("dataset power {mean} admits no normalization")));
    }
    let scale = (dataset.dim() as f64 / mean).sqrt();
    let samples = dataset.samples.iter().map(|s| s * C64::new(scale, 0.0)).collect();
    Ok(ChannelDataset { samples, scene: dataset.scene.clone(), normalized: true })
}

pub const DATASET_MAGIC: [u8; 4] = *b"LFBD";
pub const DATASET_VERSION: u16 = 1;
/// magic + version + N + L + flag
pub const DATASET_HEADER_LEN: u64 = 4 + 2 + 4 + 8 + 1;

pub fn write_dataset<W: Write>(mut w: W, dataset: &ChannelDataset) -> Result<()> {
    dataset.check_dimensions()?;
    let n = dataset.dim();
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&[dataset.normalized as u8])?;
    for s in &dataset.samples {
        for x in s.iter() {
            w.write_all(&(x.re as f32).to_le_bytes())?;
            w.write_all(&(x.im as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<ChannelDataset> {
    let mut header = [0u8; DATASET_HEADER_LEN as usize];
    let got = read_full(&mut r, &mut header)?;
    if got < 4 {
        return Err(FormatError::MalformedHeader(format!("file too short for a header ({got} bytes)")).into());
    }
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(FormatError::BadMagic { expected: DATASET_MAGIC, found: magic }.into());
    }
    if got < header.len() {
        return Err(FormatError::MalformedHeader(format!("header needs {} bytes, found {got}", header.len())).into());
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != DATASET_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let n = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let l = u64::from_le_bytes(header[10..18].try_into().unwrap());
    let normalized = match header[18] {
        0 => false,
        1 => true,
        f => return Err(FormatError::MalformedHeader(format!("normalized flag must be 0 or 1, found {f}")).into()),
    };
    if n == 0 {
        return Err(FormatError::MalformedHeader("channel dimension is zero".into()).into());
    }
    let expected = l
        .checked_mul(n as u64)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| FormatError::MalformedHeader("payload size overflows".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let found = payload.len() as u64;
    if found < expected {
        return Err(FormatError::Truncated { expected, found }.into());
    }
    if found > expected {
        return Err(FormatError::DimensionMismatch(format!(
            "payload holds {found} bytes but header declares {l} samples of dimension {n} ({expected} bytes)"
        ))
        .into());
    }
    let samples = payload
        .chunks_exact(8 * n)
        .map(|chunk| {
            CVector::from_iterator(
                n,
                chunk.chunks_exact(8).map(|c| {
                    let re = f32::from_le_bytes(c[..4].try_into().unwrap());
                    let im = f32::from_le_bytes(c[4..].try_into().unwrap());
                    C64::new(re as f64, im as f64)
                }),
            )
        })
        .collect();
    Ok(ChannelDataset { samples, scene: None, normalized })
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

pub fn save_dataset(dataset: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), dataset)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
