use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::scheme::{PrecoderKind, Scheme};
use crate::error::{Error, Result};
use crate::scene::{ArrayGeometry, SceneConfig};

/// Sweep axis, one per figure of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Snr,
    Pilots,
    Bits,
    Users,
    Iterations,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Snr => "snr_db",
            Axis::Pilots => "pilots",
            Axis::Bits => "bits",
            Axis::Users => "users",
            Axis::Iterations => "iterations",
        }
    }

    /// Whether values on this axis are counts.
    pub fn is_integer(&self) -> bool {
        !matches!(self, Axis::Snr)
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" | "snr_db" => Ok(Axis::Snr),
            "pilots" => Ok(Axis::Pilots),
            "bits" => Ok(Axis::Bits),
            "users" => Ok(Axis::Users),
            "iterations" => Ok(Axis::Iterations),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

/// Everything that determines a sweep. The transmit power is fixed to 1, so
/// the SNR is `1 / sigma_n2`.
///
/// The text form is a flat list of `key = value` lines; `#` starts a comment
/// and lists are comma separated. An optional `profile = desk|paper` line
/// selects the base values the other keys override.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_vert: usize,
    pub n_horiz: usize,
    pub spacing_vert: f64,
    pub spacing_horiz: f64,
    pub clusters: usize,
    pub paths_per_cluster: usize,
    pub azimuth_spread_deg: f64,
    pub elevation_spread_deg: f64,
    pub azimuth_sector_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub clusters_per_sample: usize,
    pub shadowing_db: f64,
    pub scene_seed: u64,
    /// Datasets are generated from the scene when no path is given.
    pub train_path: Option<PathBuf>,
    pub eval_path: Option<PathBuf>,
    /// Directory searched for `gmm-B<b>.lfbm` / `tgmm-B<b>.lfbm`; missing
    /// models are trained on the training set.
    pub model_dir: Option<PathBuf>,
    pub train_count: usize,
    pub eval_count: usize,
    pub em_iters: usize,
    pub bits: u32,
    pub users: usize,
    pub pilots: usize,
    pub snr_db: f64,
    pub num_constellations: usize,
    pub schemes: Vec<Scheme>,
    pub precoder: PrecoderKind,
    pub max_iters: usize,
    pub seed: u64,
    pub axis: Axis,
    pub axis_values: Vec<f64>,
}

pub const RHO: f64 = 1.0;

const DEFAULT_SCHEMES: &str = "gmm-obs, tgmm-obs, gmm-perfect, dft-perfect, dft-gmm, dft-lmmse, dft-omp";

impl Default for ExperimentConfig {
    /// Full study scale: 4x16 array, 6 bits, 8 users, 8 pilots, 10 dB.
    fn default() -> Self {
        let default = PrecoderKind::Rci;
        ExperimentConfig {
            n_vert: 4,
            n_horiz: 16,
            spacing_vert: 1.0,
            spacing_horiz: 0.5,
            clusters: 16,
            paths_per_cluster: 10,
            azimuth_spread_deg: 6.0,
            elevation_spread_deg: 2.0,
            azimuth_sector_deg: 60.0,
            elevation_min_deg: -15.0,
            elevation_max_deg: 5.0,
            clusters_per_sample: 1,
            shadowing_db: 4.0,
            scene_seed: 1,
            train_path: None,
            eval_path: None,
            model_dir: None,
            train_count: 100_000,
            eval_count: 10_000,
            em_iters: 100,
            bits: 6,
            users: 8,
            pilots: 8,
            snr_db: 10.0,
            num_constellations: 500,
            schemes: parse_schemes(DEFAULT_SCHEMES, default).expect("default schemes parse"),
            precoder: default,
            max_iters: 300,
            seed: 0,
            axis: Axis::Snr,
            axis_values: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        }
    }
}

fn parse_schemes(text: &str, default: PrecoderKind) -> Result<Vec<Scheme>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let s = Scheme::parse(item, default)?;
        if out.contains(&s) {
            return Err(Error::Config(format!("scheme {s} listed twice")));
        }
        out.push(s);
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|v| parse_value(key, v)).collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Desk scale: 2x8 array, 4 bits, 4 users, 10^4 training samples, 100 constellations.
    pub fn desk() -> Self {
        ExperimentConfig {
            n_vert: 2,
            n_horiz: 8,
            train_count: 10_000,
            eval_count: 2_000,
            bits: 4,
            users: 4,
            num_constellations: 100,
            ..Self::default()
        }
    }

    pub fn paper() -> Self {
        Self::default()
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.n_vert, self.n_horiz, self.spacing_vert, self.spacing_horiz)
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let mut scene = SceneConfig::umi(self.geometry()?, self.scene_seed);
        scene.num_clusters = self.clusters;
        scene.paths_per_cluster = self.paths_per_cluster;
        scene.azimuth_spread = self.azimuth_spread_deg.to_radians();
        scene.elevation_spread = self.elevation_spread_deg.to_radians();
        scene.azimuth_sector = self.azimuth_sector_deg.to_radians();
        scene.elevation_min = self.elevation_min_deg.to_radians();
        scene.elevation_max = self.elevation_max_deg.to_radians();
        scene.clusters_per_sample = self.clusters_per_sample;
        scene.cluster_shadowing_db = self.shadowing_db;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_constellations == 0 {
            return bad("num_constellations must be at least 1".into());
        }
        if self.users == 0 || self.pilots == 0 || self.max_iters == 0 || self.em_iters == 0 {
            return bad("users, pilots, max_iters and em_iters must be at least 1".into());
        }
        if self.bits == 0 || self.bits > 16 {
            return bad(format!("bits = {} outside 1..=16", self.bits));
        }
        if self.train_path.is_none() && self.train_count == 0 {
            return bad("train_count must be positive when generating data".into());
        }
        if self.eval_path.is_none() && self.users > self.eval_count {
            return bad(format!("users = {} exceeds eval_count = {}", self.users, self.eval_count));
        }
        if self.axis_values.is_empty() || self.axis_values.iter().any(|v| !v.is_finite()) {
            return bad("axis_values must be a non-empty list of finite numbers".into());
        }
        if self.axis.is_integer() && self.axis_values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return bad(format!("{} values must be positive integers", self.axis.name()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let mut cfg = match pairs.remove("profile").as_deref() {
            None | Some("paper") => Self::paper(),
            Some("desk") => Self::desk(),
            Some(other) => return Err(Error::Config(format!("unknown profile {other:?}"))),
        };
        // The default precoder must be known before schemes are parsed.
        if let Some(v) = pairs.remove("precoder") {
            cfg.precoder = v.parse()?;
            cfg.schemes = parse_schemes(DEFAULT_SCHEMES, cfg.precoder)?;
        }
        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "n_vert" => cfg.n_vert = parse_value(key, v)?,
                "n_horiz" => cfg.n_horiz = parse_value(key, v)?,
                "spacing_vert" => cfg.spacing_vert = parse_value(key, v)?,
                "spacing_horiz" => cfg.spacing_horiz = parse_value(key, v)?,
                "clusters" => cfg.clusters = parse_value(key, v)?,
                "paths_per_cluster" => cfg.paths_per_cluster = parse_value(key, v)?,
                "azimuth_spread_deg" => cfg.azimuth_spread_deg = parse_value(key, v)?,
                "elevation_spread_deg" => cfg.elevation_spread_deg = parse_value(key, v)?,
                "azimuth_sector_deg" => cfg.azimuth_sector_deg = parse_value(key, v)?,
                "elevation_min_deg" => cfg.elevation_min_deg = parse_value(key, v)?,
                "elevation_max_deg" => cfg.elevation_max_deg = parse_value(key, v)?,
                "clusters_per_sample" => cfg.clusters_per_sample = parse_value(key, v)?,
                "shadowing_db" => cfg.shadowing_db = parse_value(key, v)?,
                "scene_seed" => cfg.scene_seed = parse_value(key, v)?,
                "train" => cfg.train_path = Some(PathBuf::from(v)),
                "eval" => cfg.eval_path = Some(PathBuf::from(v)),
                "model_dir" => cfg.model_dir = Some(PathBuf::from(v)),
                "train_count" => cfg.train_count = parse_value(key, v)?,
                "eval_count" => cfg.eval_count = parse_value(key, v)?,
                "em_iters" => cfg.em_iters = parse_value(key, v)?,
                "bits" => cfg.bits = parse_value(key, v)?,
                "users" => cfg.users = parse_value(key, v)?,
                "pilots" => cfg.pilots = parse_value(key, v)?,
                "snr_db" => cfg.snr_db = parse_value(key, v)?,
                "num_constellations" => cfg.num_constellations = parse_value(key, v)?,
                "schemes" => cfg.schemes = parse_schemes(v, cfg.precoder)?,
                "max_iters" => cfg.max_iters = parse_value(key, v)?,
                "seed" => cfg.seed = parse_value(key, v)?,
                "axis" => cfg.axis = v.parse()?,
                "axis_values" => cfg.axis_values = parse_list(key, v)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: every key in a fixed order. Parsing it gives back the
    /// same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("n_vert", self.n_vert.to_string());
        put("n_horiz", self.n_horiz.to_string());
        put("spacing_vert", self.spacing_vert.to_string());
        put("spacing_horiz", self.spacing_horiz.to_string());
        put("clusters", self.clusters.to_string());
        put("paths_per_cluster", self.paths_per_cluster.to_string());
        put("azimuth_spread_deg", self.azimuth_spread_deg.to_string());
        put("elevation_spread_deg", self.elevation_spread_deg.to_string());
        put("azimuth_sector_deg", self.azimuth_sector_deg.to_string());
        put("elevation_min_deg", self.elevation_min_deg.to_string());
        put("elevation_max_deg", self.elevation_max_deg.to_string());
        put("clusters_per_sample", self.clusters_per_sample.to_string());
        put("shadowing_db", self.shadowing_db.to_string());
        put("scene_seed", self.scene_seed.to_string());
        if let Some(p) = &self.train_path {
            put("train", p.display().to_string());
        }
        if let Some(p) = &self.eval_path {
            put("eval", p.display().to_string());
        }
        if let Some(p) = &self.model_dir {
            put("model_dir", p.display().to_string());
        }
        put("train_count", self.train_count.to_string());
        put("eval_count", self.eval_count.to_string());
        put("em_iters", self.em_iters.to_string());
        put("bits", self.bits.to_string());
        put("users", self.users.to_string());
        put("pilots", self.pilots.to_string());
        put("snr_db", self.snr_db.to_string());
        put("num_constellations", self.num_constellations.to_string());
        put("precoder", self.precoder.name().to_string());
        put("schemes", join(&self.schemes));
        put("max_iters", self.max_iters.to_string());
        put("seed", self.seed.to_string());
        put("axis", self.axis.name().to_string());
        put("axis_values", join(&self.axis_values));
        s
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
