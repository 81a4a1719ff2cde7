use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use super::config::{Axis, ExperimentConfig, RHO};
use super::rate::sum_rate;
use super::scheme::{PrecoderKind, Scheme};
use crate::error::{invalid, Error, Result};
use crate::feedback::{
    build_dft_codebook, build_pilot_matrix, gmm_feedback_index, gmm_feedback_index_perfect, oversampled_dictionary,
    sample_moments, select_codebook_index, Codebook, Estimator, GmmEstimator, LmmseEstimator, OmpEstimator, OmpStop,
    PilotSetup, SchemeTag,
};
use crate::gmm::{fit_em, load_model, Constraint, EmOptions, GmmModel};
use crate::linalg::{CMatrix, CVector};
use crate::precoder::{directional_representatives, rci_precoders, swmmse_precoders, Designer, SwmmseOptions};
use crate::rng::{complex_normal_vector, derive_seed, derived_rng, stream};
use crate::scene::{generate_channels, load_dataset, normalize_dataset, ArrayGeometry, ChannelDataset};

/// A trained mixture with its precomputed directional representatives.
#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub bits: u32,
    pub constraint: Constraint,
    pub model: Arc<GmmModel>,
    pub representatives: Arc<Vec<CVector>>,
}

impl ModelEntry {
    pub fn new(bits: u32, constraint: Constraint, model: GmmModel) -> Result<Self> {
        if model.num_components() != 1usize << bits {
            return invalid(format!("model has {} components, expected 2^{bits}", model.num_components()));
        }
        let representatives = directional_representatives(&model)?.into_iter().map(|r| r.vector).collect();
        Ok(ModelEntry { bits, constraint, model: Arc::new(model), representatives: Arc::new(representatives) })
    }
}

/// Datasets, models and point-independent statistics shared by all sweep points.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub geometry: ArrayGeometry,
    pub train: ChannelDataset,
    pub eval: ChannelDataset,
    pub models: Vec<ModelEntry>,
    /// Problems met while preparing, e.g. a model that failed to train.
    pub notes: Vec<String>,
    moments: (CVector, CMatrix),
    omp_dictionary: CMatrix,
}

/// Parameters of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub bits: u32,
    pub pilots: usize,
    pub snr_db: f64,
    pub users: usize,
    /// Iteration counts at which SWMMSE precoders are evaluated.
    pub iterations: Vec<usize>,
}

enum Runtime {
    Mixture { entry: ModelEntry, estimator: Option<Arc<GmmEstimator>>, perfect: bool },
    Codebook { estimator: CsiEstimator },
    Missing(String),
}

enum CsiEstimator {
    Perfect,
    Gmm(Arc<GmmEstimator>),
    Lmmse(LmmseEstimator),
    Omp(OmpEstimator),
}

/// Everything derived for one sweep point: pilots, codebook and per-scheme estimators.
pub struct PreparedPoint {
    pub params: PointParams,
    pub setup: PilotSetup,
    pub codebook: Codebook,
    schemes: Vec<(Scheme, Runtime)>,
}

impl PreparedPoint {
    /// Schemes whose prerequisites are missing, with the reason.
    pub fn missing(&self) -> Vec<String> {
        self.schemes
            .iter()
            .filter_map(|(s, r)| match r {
                Runtime::Missing(why) => Some(format!("{s}: {why}")),
                _ => None,
            })
            .collect()
    }
}

/// Sum-rates of one constellation: `rates[i][s]` for iteration point `i` and
/// scheme `s`; `NaN` marks a scheme that could not run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationOutcome {
    pub users: Vec<usize>,
    pub rates: Vec<Vec<f64>>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub runtime_secs: f64,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub schemes: Vec<String>,
    /// `mean[point][scheme]`
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    /// `raw[point][constellation][scheme]`
    pub raw: Vec<Vec<Vec<f64>>>,
    pub metadata: SweepMetadata,
}

fn model_file(constraint: Constraint, bits: u32) -> String {
    let prefix = match constraint {
        Constraint::Full => "gmm",
        Constraint::Toeplitz => "tgmm",
    };
    format!("{prefix}-B{bits}.lfbm")
}

fn normalized(ds: ChannelDataset) -> Result<ChannelDataset> {
    if ds.normalized {
        Ok(ds)
    } else {
        normalize_dataset(&ds)
    }
}

impl Experiment {
    /// Loads or generates the datasets, then loads or trains every model the
    /// configured schemes need at every bit budget of the sweep.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (train, eval) = match (&config.train_path, &config.eval_path) {
            (Some(t), Some(e)) => (normalized(load_dataset(t)?)?, normalized(load_dataset(e)?)?),
            (None, None) => {
                // One draw, normalized jointly, so both sets share a scale.
                let all = generate_channels(&config.scene()?, config.train_count + config.eval_count)?;
                let all = normalize_dataset(&all)?;
                all.split_at(config.train_count)
            }
            (Some(t), None) => {
                let train = normalized(load_dataset(t)?)?;
                let scene = config.scene()?;
                let all = generate_channels(&scene, config.train_count + config.eval_count)?;
                let (_, eval) = normalize_dataset(&all)?.split_at(config.train_count);
                (train, eval)
            }
            (None, Some(e)) => {
                let eval = normalized(load_dataset(e)?)?;
                let train = normalize_dataset(&generate_channels(&config.scene()?, config.train_count)?)?;
                (train, eval)
            }
        };
        let mut bits = vec![config.bits];
        if config.axis == Axis::Bits {
            bits = config.axis_values.iter().map(|&b| b as u32).collect();
        }
        let needed = |c: Constraint| config.schemes.iter().any(|s| s.required_model() == Some(c));
        let mut models = Vec::new();
        let mut notes = Vec::new();
        let geometry = config.geometry()?;
        for &b in &bits {
            for &c in &[Constraint::Full, Constraint::Toeplitz] {
                if !needed(c) {
                    continue;
                }
                match Self::obtain_model(&config, &geometry, &train, b, c) {
                    Ok(entry) => models.push(entry),
                    Err(e) => {
                        log::warn!("no {} model for B = {b}: {e}", c.name());
                        notes.push(format!("{} model for B = {b} unavailable: {e}", c.name()));
                    }
                }
            }
        }
        Self::from_parts(config, train, eval, models, notes)
    }

    fn obtain_model(
        config: &ExperimentConfig,
        geometry: &ArrayGeometry,
        train: &ChannelDataset,
        bits: u32,
        constraint: Constraint,
    ) -> Result<ModelEntry> {
        if let Some(dir) = &config.model_dir {
            let path = dir.join(model_file(constraint, bits));
            if path.exists() {
                log::info!("loading {}", path.display());
                return ModelEntry::new(bits, constraint, load_model(&path)?);
            }
        }
        log::info!("training {} model with K = {}", constraint.name(), 1usize << bits);
        let opts = EmOptions {
            max_iters: config.em_iters,
            seed: derive_seed(config.seed, stream::EM_INIT, (bits as u64) << 1 | (constraint == Constraint::Toeplitz) as u64),
            layout: Some((geometry.n_vert, geometry.n_horiz)),
            ..EmOptions::default()
        };
        let fit = fit_em(train, 1usize << bits, constraint, &opts)?;
        ModelEntry::new(bits, constraint, fit.model)
    }

    /// Assembles an experiment from already available datasets and models.
    pub fn from_parts(
        config: ExperimentConfig,
        train: ChannelDataset,
        eval: ChannelDataset,
        models: Vec<ModelEntry>,
        notes: Vec<String>,
    ) -> Result<Self> {
        let geometry = config.geometry()?;
        let n = geometry.num_antennas();
        if train.dim() != n || eval.dim() != n {
            return Err(Error::Config(format!(
                "datasets have dimensions {} / {}, the array has {n} antennas",
                train.dim(),
                eval.dim()
            )));
        }
        if let Some(m) = models.iter().find(|m| m.model.dim() != n) {
            return Err(Error::Config(format!("model with {} components has dimension {}", m.model.num_components(), m.model.dim())));
        }
        let moments = sample_moments(&train)?;
        let omp_dictionary = oversampled_dictionary(geometry.n_vert, geometry.n_horiz, 2);
        Ok(Experiment { config, geometry, train, eval, models, notes, moments, omp_dictionary })
    }

    pub fn model(&self, bits: u32, constraint: Constraint) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.bits == bits && m.constraint == constraint)
    }

    /// Point parameters of the base configuration.
    pub fn base_params(&self) -> PointParams {
        let c = &self.config;
        PointParams { bits: c.bits, pilots: c.pilots, snr_db: c.snr_db, users: c.users, iterations: vec![c.max_iters] }
    }

    /// Point parameters for one axis value.
    pub fn params_at(&self, axis: Axis, value: f64) -> PointParams {
        let mut p = self.base_params();
        match axis {
            Axis::Snr => p.snr_db = value,
            Axis::Pilots => p.pilots = value as usize,
            Axis::Bits => p.bits = value as u32,
            Axis::Users => p.users = value as usize,
            Axis::Iterations => p.iterations = vec![value as usize],
        }
        p
    }

    pub fn prepare_point(&self, params: PointParams) -> Result<PreparedPoint> {
        if params.users == 0 || params.users > self.eval.len() {
            return invalid(format!("cannot draw {} users from {} evaluation channels", params.users, self.eval.len()));
        }
        if params.iterations.is_empty() || params.iterations.contains(&0) {
            return invalid("iteration points must be at least 1");
        }
        let setup = build_pilot_matrix(&self.geometry, params.pilots, RHO)?.with_snr_db(params.snr_db);
        let codebook = build_dft_codebook(&self.geometry, params.bits)?;
        let mut estimators: Vec<(Constraint, Arc<GmmEstimator>)> = Vec::new();
        let mut gmm_estimator = |constraint: Constraint| -> std::result::Result<(ModelEntry, Arc<GmmEstimator>), String> {
            let entry = self
                .model(params.bits, constraint)
                .ok_or_else(|| format!("no {} model for B = {}", constraint.name(), params.bits))?;
            if let Some((_, e)) = estimators.iter().find(|(c, _)| *c == constraint) {
                return Ok((entry.clone(), e.clone()));
            }
            let e = Arc::new(GmmEstimator::new(&entry.model, &setup).map_err(|e| e.to_string())?);
            estimators.push((constraint, e.clone()));
            Ok((entry.clone(), e))
        };
        let mut schemes = Vec::new();
        for &scheme in &self.config.schemes {
            let runtime = match scheme.tag {
                SchemeTag::GmmObs | SchemeTag::TgmmObs => match gmm_estimator(scheme.required_model().unwrap()) {
                    Ok((entry, est)) => Runtime::Mixture { entry, estimator: Some(est), perfect: false },
                    Err(why) => Runtime::Missing(why),
                },
                SchemeTag::GmmPerfect | SchemeTag::TgmmPerfect => {
                    match self.model(params.bits, scheme.required_model().unwrap()) {
                        Some(entry) => Runtime::Mixture { entry: entry.clone(), estimator: None, perfect: true },
                        None => Runtime::Missing(format!("no model for B = {}", params.bits)),
                    }
                }
                SchemeTag::Dft(Estimator::Perfect) => Runtime::Codebook { estimator: CsiEstimator::Perfect },
                SchemeTag::Dft(Estimator::Gmm) | SchemeTag::Dft(Estimator::Tgmm) => {
                    match gmm_estimator(scheme.required_model().unwrap()) {
                        Ok((_, est)) => Runtime::Codebook { estimator: CsiEstimator::Gmm(est) },
                        Err(why) => Runtime::Missing(why),
                    }
                }
                SchemeTag::Dft(Estimator::Lmmse) => match LmmseEstimator::new(&self.moments.0, &self.moments.1, &setup) {
                    Ok(e) => Runtime::Codebook { estimator: CsiEstimator::Lmmse(e) },
                    Err(e) => Runtime::Missing(e.to_string()),
                },
                SchemeTag::Dft(Estimator::Omp) => {
                    match OmpEstimator::new(&setup, self.omp_dictionary.clone(), OmpStop::for_setup(&setup)) {
                        Ok(e) => Runtime::Codebook { estimator: CsiEstimator::Omp(e) },
                        Err(e) => Runtime::Missing(e.to_string()),
                    }
                }
            };
            schemes.push((scheme, runtime));
        }
        Ok(PreparedPoint { params, setup, codebook, schemes })
    }

    /// Runs every scheme on one constellation. Users and pilot noise depend
    /// only on the master seed and `index`, and are shared by all schemes.
    pub fn run_constellation(&self, point: &PreparedPoint, index: u64) -> ConstellationOutcome {
        let seed = self.config.seed;
        let (users, channels, observations) = self.draw_constellation(point, index);
        let sigma_n2 = point.setup.sigma_n2;
        let swmmse_seed = derive_seed(seed, stream::SWMMSE, index);
        let n_points = point.params.iterations.len();
        let mut rates = vec![vec![f64::NAN; point.schemes.len()]; n_points];
        let mut errors = Vec::new();
        for (s, (scheme, runtime)) in point.schemes.iter().enumerate() {
            let result = self.scheme_rates(point, *scheme, runtime, &channels, &observations, sigma_n2, swmmse_seed);
            match result {
                Ok(per_point) => {
                    for (row, r) in rates.iter_mut().zip(per_point) {
                        row[s] = r;
                    }
                }
                Err(e) => errors.push(format!("constellation {index}, {scheme}: {e}")),
            }
        }
        ConstellationOutcome { users, rates, errors }
    }

    /// Users, their channels and their pilot observations for constellation `index`.
    pub fn draw_constellation(&self, point: &PreparedPoint, index: u64) -> (Vec<usize>, Vec<CVector>, Vec<CVector>) {
        let seed = self.config.seed;
        let mut user_rng = derived_rng(seed, stream::USERS, index);
        let users: Vec<usize> = sample_indices(&mut user_rng, self.eval.len(), point.params.users).into_vec();
        let channels: Vec<CVector> = users.iter().map(|&u| self.eval.samples[u].clone()).collect();
        let mut noise_rng = derived_rng(seed, stream::PILOT_NOISE, index);
        let observations = channels
            .iter()
            .map(|h| point.setup.observe_with(h, &complex_normal_vector(&mut noise_rng, point.setup.num_pilots())))
            .collect();
        (users, channels, observations)
    }

    /// SWMMSE trajectory of the first SWMMSE scheme on constellation `index`,
    /// with the sum-rate on the true channels after every iteration.
    pub fn swmmse_trajectory(&self, point: &PreparedPoint, index: u64) -> Result<(String, Vec<(usize, f64, f64)>)> {
        let (scheme, runtime) = point
            .schemes
            .iter()
            .find(|(s, _)| s.precoder == PrecoderKind::Swmmse)
            .ok_or_else(|| Error::Config("no SWMMSE scheme configured".into()))?;
        let Runtime::Mixture { entry, estimator, perfect } = runtime else {
            return Err(Error::Config(format!("{scheme} cannot run")));
        };
        let (_, channels, observations) = self.draw_constellation(point, index);
        let reports = channels
            .iter()
            .zip(&observations)
            .map(|(h, y)| match (perfect, estimator) {
                (false, Some(e)) => gmm_feedback_index(e.observation_model(), y),
                _ => gmm_feedback_index_perfect(&entry.model, h),
            })
            .collect::<Result<Vec<_>>>()?;
        let opts = SwmmseOptions {
            max_iters: *point.params.iterations.iter().max().expect("non-empty iterations"),
            seed: derive_seed(self.config.seed, stream::SWMMSE, index),
            record_snapshots: true,
            ..SwmmseOptions::default()
        };
        let sigma_n2 = point.setup.sigma_n2;
        let precoders = swmmse_precoders(&entry.model, &reports, sigma_n2, RHO, &opts)?;
        let Designer::Swmmse(trace) = &precoders.designer else { unreachable!("SWMMSE designer tag") };
        let rows = trace
            .trajectory
            .iter()
            .zip(&trace.snapshots)
            .map(|(p, v)| Ok((p.iteration, sum_rate(&channels, v, sigma_n2)?, p.power)))
            .collect::<Result<Vec<_>>>()?;
        Ok((scheme.to_string(), rows))
    }

    #[allow(clippy::too_many_arguments)]
    fn scheme_rates(
        &self,
        point: &PreparedPoint,
        scheme: Scheme,
        runtime: &Runtime,
        channels: &[CVector],
        observations: &[CVector],
        sigma_n2: f64,
        swmmse_seed: u64,
    ) -> Result<Vec<f64>> {
        let iterations = &point.params.iterations;
        let constant = |v: f64| vec![v; iterations.len()];
        match runtime {
            Runtime::Missing(why) => Err(Error::Config(why.clone())),
            Runtime::Codebook { estimator } => {
                let mut reps = Vec::with_capacity(channels.len());
                for (h, y) in channels.iter().zip(observations) {
                    let h_hat = match estimator {
                        CsiEstimator::Perfect => h.clone(),
                        CsiEstimator::Gmm(e) => e.estimate(y)?,
                        CsiEstimator::Lmmse(e) => e.estimate(y)?,
                        CsiEstimator::Omp(e) => e.estimate(y)?,
                    };
                    let report = select_codebook_index(&point.codebook, &h_hat)?;
                    reps.push(point.codebook.entry(report.index));
                }
                let precoders = rci_precoders(&reps, sigma_n2, RHO)?;
                Ok(constant(sum_rate(channels, &precoders.vectors, sigma_n2)?))
            }
            Runtime::Mixture { entry, estimator, perfect } => {
                let mut reports = Vec::with_capacity(channels.len());
                for (u, (h, y)) in channels.iter().zip(observations).enumerate() {
                    let report = match (perfect, estimator) {
                        (true, _) | (false, None) => gmm_feedback_index_perfect(&entry.model, h)?,
                        (false, Some(e)) => gmm_feedback_index(e.observation_model(), y)?,
                    };
                    reports.push(report.for_user(u));
                }
                match scheme.precoder {
                    PrecoderKind::Rci => {
                        let reps: Vec<CVector> = reports.iter().map(|r| entry.representatives[r.index].clone()).collect();
                        let precoders = rci_precoders(&reps, sigma_n2, RHO)?;
                        Ok(constant(sum_rate(channels, &precoders.vectors, sigma_n2)?))
                    }
                    PrecoderKind::Swmmse => {
                        let max = *iterations.iter().max().expect("non-empty iterations");
                        let opts = SwmmseOptions {
                            max_iters: max,
                            seed: swmmse_seed,
                            record_snapshots: iterations.len() > 1 || iterations[0] != max,
                            ..SwmmseOptions::default()
                        };
                        let precoders = swmmse_precoders(&entry.model, &reports, sigma_n2, RHO, &opts)?;
                        if !opts.record_snapshots {
                            return Ok(vec![sum_rate(channels, &precoders.vectors, sigma_n2)?]);
                        }
                        let Designer::Swmmse(trace) = &precoders.designer else {
                            unreachable!("SWMMSE designer tag")
                        };
                        iterations.iter().map(|&t| sum_rate(channels, &trace.snapshots[t - 1], sigma_n2)).collect()
                    }
                }
            }
        }
    }

    /// Runs all constellations of one point in parallel; results are kept in
    /// constellation order.
    pub fn run_point(&self, point: &PreparedPoint) -> Vec<ConstellationOutcome> {
        (0..self.config.num_constellations as u64).into_par_iter().map(|c| self.run_constellation(point, c)).collect()
    }

    /// Sweeps the configured axis.
    pub fn run_sweep(&self) -> Result<SweepResult> {
        self.run_axis(self.config.axis, &self.config.axis_values)
    }

    pub fn run_axis(&self, axis: Axis, values: &[f64]) -> Result<SweepResult> {
        if values.is_empty() {
            return invalid("a sweep needs at least one axis value");
        }
        let start = Instant::now();
        let names: Vec<String> = self.config.schemes.iter().map(|s| s.to_string()).collect();
        let mut errors = self.notes.clone();
        let mut raw: Vec<Vec<Vec<f64>>> = Vec::with_capacity(values.len());
        let missing_row = || vec![vec![f64::NAN; names.len()]; self.config.num_constellations];
        if axis == Axis::Iterations {
            // One SWMMSE run per constellation serves every iteration count.
            let mut params = self.base_params();
            params.iterations = values.iter().map(|&v| v as usize).collect();
            match self.prepare_point(params) {
                Ok(point) => {
                    errors.extend(point.missing());
                    let outcomes = self.run_point(&point);
                    for i in 0..values.len() {
                        raw.push(outcomes.iter().map(|o| o.rates[i].clone()).collect());
                    }
                    errors.extend(outcomes.into_iter().flat_map(|o| o.errors));
                }
                Err(e) => {
                    errors.push(format!("iterations: {e}"));
                    raw.extend(values.iter().map(|_| missing_row()));
                }
            }
        } else {
            for &v in values {
                match self.prepare_point(self.params_at(axis, v)) {
                    Ok(point) => {
                        errors.extend(point.missing().into_iter().map(|m| format!("{} = {v}: {m}", axis.name())));
                        let outcomes = self.run_point(&point);
                        raw.push(outcomes.iter().map(|o| o.rates[0].clone()).collect());
                        errors.extend(outcomes.into_iter().flat_map(|o| o.errors));
                    }
                    Err(e) => {
                        errors.push(format!("{} = {v}: {e}", axis.name()));
                        raw.push(missing_row());
                    }
                }
            }
        }
        let (mean, se) = raw.iter().map(|per_point| mean_and_se(per_point, names.len())).unzip();
        Ok(SweepResult {
            axis,
            values: values.to_vec(),
            schemes: names,
            mean,
            se,
            raw,
            metadata: SweepMetadata {
                config_hash: self.config.hash(),
                seed: self.config.seed,
                runtime_secs: start.elapsed().as_secs_f64(),
                errors,
            },
        })
    }
}

/// Per-scheme mean and standard error of the mean (`n - 1` normalization;
/// zero for a single constellation).
pub fn mean_and_se(per_constellation: &[Vec<f64>], num_schemes: usize) -> (Vec<f64>, Vec<f64>) {
    let n = per_constellation.len() as f64;
    (0..num_schemes)
        .map(|s| {
            let mean = per_constellation.iter().map(|r| r[s]).sum::<f64>() / n;
            if per_constellation.len() < 2 {
                return (mean, 0.0);
            }
            let var = per_constellation.iter().map(|r| (r[s] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .unzip()
}
