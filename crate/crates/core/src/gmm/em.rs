//! Expectation-maximization for complex Gaussian mixtures.
//!
//! The E-step is evaluated in fixed-size sample chunks and reduced in chunk
//! order, so a seeded fit is reproducible regardless of thread count.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::density::{log_sum_exp, GaussianFactor};
use super::structure::ToeplitzDictionary;
use super::{Constraint, CovarianceRepr, GmmModel};
use crate::error::{invalid, Error, Result};
use crate::linalg::{floor_eigenvalues, real, CMatrix, CVector, C64};
use crate::rng::{derived_rng, stream};
use crate::scene::ChannelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Means seeded by squared-distance weighted sampling.
    KMeansPlusPlus,
    /// Means are distinct uniformly drawn samples.
    RandomSamples,
}

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the relative change of the average log-likelihood drops below this.
    pub rel_loglik_tol: f64,
    /// Covariance floor as a fraction of the mean per-antenna power.
    pub floor_scale: f64,
    pub init: InitStrategy,
    pub seed: u64,
    /// Array layout `(n_vert, n_horiz)`; taken from the dataset's scene when absent.
    pub layout: Option<(usize, usize)>,
    pub chunk_size: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 100,
            rel_loglik_tol: 1e-6,
            floor_scale: 1e-6,
            init: InitStrategy::KMeansPlusPlus,
            seed: 0,
            layout: None,
            chunk_size: 256,
        }
    }
}

/// A component that lost its support and was restarted from a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reseed {
    pub iteration: usize,
    pub component: usize,
    pub sample: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EmReport {
    /// Average log-likelihood of the parameters entering each iteration; the
    /// last entry belongs to the returned model.
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: Vec<Reseed>,
    /// Largest relative log-likelihood decrease between consecutive entries.
    pub max_rel_decrease: f64,
    pub floor: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: GmmModel,
    pub report: EmReport,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<CVector>,
    covs: Vec<CovarianceRepr>,
    realized: Vec<CMatrix>,
}

struct Estep {
    /// Row-major `L x K`.
    resp: Vec<f64>,
    avg_loglik: f64,
}

/// Maximum-likelihood fit of a `k`-component mixture to a normalized dataset.
pub fn fit_em(dataset: &ChannelDataset, k: usize, constraint: Constraint, opts: &EmOptions) -> Result<FitOutcome> {
    let l = dataset.len();
    if k == 0 {
        return invalid("component count must be positive");
    }
    if l < k {
        return invalid(format!("{l} samples cannot support {k} components"));
    }
    if !dataset.normalized {
        return invalid("EM expects a normalized dataset");
    }
    if !(opts.rel_loglik_tol > 0.0) || !(opts.floor_scale >= 0.0) || opts.chunk_size == 0 {
        return invalid("EM tolerances must be positive");
    }
    let n = dataset.dim();
    let (n_vert, n_horiz) = match (opts.layout, &dataset.scene) {
        (Some(layout), _) => layout,
        (None, Some(scene)) => (scene.geometry.n_vert, scene.geometry.n_horiz),
        (None, None) if constraint == Constraint::Full => (1, n),
        (None, None) => return invalid("the Toeplitz constraint needs the array layout"),
    };
    if n_vert * n_horiz != n {
        return invalid(format!("layout {n_vert}x{n_horiz} does not match dimension {n}"));
    }
    let dictionary = match constraint {
        Constraint::Toeplitz => Some(Arc::new(ToeplitzDictionary::new(n_vert, n_horiz)?)),
        Constraint::Full => None,
    };
    let samples = &dataset.samples;

    let global_mean = samples.iter().fold(CVector::zeros(n), |acc, s| acc + s) / real(l as f64);
    let global_scatter = weighted_scatter(samples, None, &global_mean);
    let floor = opts.floor_scale * global_scatter.trace().re / n as f64;
    let global_cov = structured_cov(&global_scatter, floor, dictionary.as_deref());

    let mut params = initialize(samples, k, &global_cov, dictionary.as_deref(), opts);
    let mut report = EmReport { floor, ..Default::default() };
    let mut reseed_rng = derived_rng(opts.seed, stream::EM_RESEED, 0);

    let mut iter = 0;
    let mut estep = e_step(samples, &params, opts.chunk_size)?;
    report.loglik.push(estep.avg_loglik);
    while iter < opts.max_iters {
        let prev = estep.avg_loglik;
        let reseeds_before = report.reseeded.len();
        let mut candidate =
            m_step(samples, &estep.resp, k, floor, &global_cov, dictionary.as_deref(), &mut reseed_rng, iter, &mut report);
        let mut next = e_step(samples, &candidate, opts.chunk_size)?;
        // The structured covariance update is a projection rather than an
        // exact maximizer. When it lowers the likelihood, step the spectral
        // vectors back toward the previous ones; at the previous covariances
        // the update of weights and means alone cannot decrease it.
        if let Some(dict) = dictionary.as_deref() {
            if report.reseeded.len() == reseeds_before {
                let mut step = 0.5;
                while relative_change(next.avg_loglik, prev) < -BACKTRACK_TOL {
                    let mixed = mix_spectral(&params, &candidate, step, dict);
                    next = e_step(samples, &mixed, opts.chunk_size)?;
                    candidate = mixed;
                    if step == 0.0 {
                        break;
                    }
                    step = if step > 0.1 { step / 2.0 } else { 0.0 };
                }
            }
        }
        params = candidate;
        estep = next;
        iter += 1;
        let rel = relative_change(estep.avg_loglik, prev);
        report.max_rel_decrease = report.max_rel_decrease.max(-rel);
        report.loglik.push(estep.avg_loglik);
        if rel.abs() < opts.rel_loglik_tol {
            report.converged = true;
            break;
        }
    }
    report.iterations = iter;
    if constraint == Constraint::Toeplitz && report.max_rel_decrease > 1e-3 {
        log::warn!("structured EM: log-likelihood decreased by {:.2e} (relative) in one step", report.max_rel_decrease);
    }

    let model = GmmModel::with_dictionary(params.weights, params.means, params.covs, n_vert, n_horiz, dictionary)?;
    Ok(FitOutcome { model, report })
}

/// `(1/sum w) sum_i w_i (x_i - mean)(x_i - mean)^H`, or the unweighted average.
fn weighted_scatter(samples: &[CVector], weights: Option<(&[f64], usize, usize)>, mean: &CVector) -> CMatrix {
    let n = mean.len();
    // Upper triangle, row-major, accumulated sample by sample.
    let mut upper = vec![C64::new(0.0, 0.0); n * n];
    let mut diff = vec![C64::new(0.0, 0.0); n];
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let w = match weights {
            Some((resp, k, comp)) => resp[i * k + comp],
            None => 1.0,
        };
        if w == 0.0 {
            continue;
        }
        total += w;
        for (d, (x, m)) in diff.iter_mut().zip(s.iter().zip(mean.iter())) {
            *d = x - m;
        }
        for r in 0..n {
            let a = diff[r] * w;
            let row = &mut upper[r * n..(r + 1) * n];
            for c in r..n {
                row[c] += a * diff[c].conj();
            }
        }
    }
    let total = total.max(f64::MIN_POSITIVE);
    CMatrix::from_fn(n, n, |r, c| if r <= c { upper[r * n + c] / total } else { upper[c * n + r].conj() / total })
}

fn structured_cov(scatter: &CMatrix, floor: f64, dictionary: Option<&ToeplitzDictionary>) -> CovarianceRepr {
    match dictionary {
        None => CovarianceRepr::Full(floor_eigenvalues(scatter, floor)),
        Some(d) => CovarianceRepr::Spectral(d.mstep(scatter, floor)),
    }
}

const BACKTRACK_TOL: f64 = 1e-9;

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(f64::MIN_POSITIVE)
}

/// Candidate weights and means with spectral vectors `(1 - t) old + t new`.
fn mix_spectral(old: &Params, new: &Params, t: f64, dict: &ToeplitzDictionary) -> Params {
    let covs: Vec<CovarianceRepr> = old
        .covs
        .iter()
        .zip(&new.covs)
        .map(|(a, b)| match (a, b) {
            (CovarianceRepr::Spectral(a), CovarianceRepr::Spectral(b)) => CovarianceRepr::Spectral(a * (1.0 - t) + b * t),
            _ => b.clone(),
        })
        .collect();
    let realized = covs.iter().map(|c| realize(c, Some(dict))).collect();
    Params { weights: new.weights.clone(), means: new.means.clone(), covs, realized }
}

fn realize(cov: &CovarianceRepr, dictionary: Option<&ToeplitzDictionary>) -> CMatrix {
    match (cov, dictionary) {
        (CovarianceRepr::Full(c), _) => c.clone(),
        (CovarianceRepr::Spectral(c), Some(d)) => d.realize(c),
        (CovarianceRepr::Spectral(_), None) => unreachable!("spectral covariance without dictionary"),
    }
}

fn initialize(
    samples: &[CVector],
    k: usize,
    global_cov: &CovarianceRepr,
    dictionary: Option<&ToeplitzDictionary>,
    opts: &EmOptions,
) -> Params {
    let mut rng = derived_rng(opts.seed, stream::EM_INIT, 0);
    let l = samples.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    match opts.init {
        InitStrategy::RandomSamples => {
            chosen = rand::seq::index::sample(&mut rng, l, k).into_vec();
        }
        InitStrategy::KMeansPlusPlus => {
            chosen.push(rng.random_range(0..l));
            let mut dist: Vec<f64> = samples.iter().map(|s| (s - &samples[chosen[0]]).norm_squared()).collect();
            while chosen.len() < k {
                let total: f64 = dist.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = l - 1;
                    for (i, d) in dist.iter().enumerate() {
                        if target < *d {
                            pick = i;
                            break;
                        }
                        target -= d;
                    }
                    pick
                } else {
                    rng.random_range(0..l)
                };
                chosen.push(next);
                for (d, s) in dist.iter_mut().zip(samples) {
                    *d = d.min((s - &samples[next]).norm_squared());
                }
            }
        }
    }
    let realized_global = realize(global_cov, dictionary);
    Params {
        weights: vec![1.0 / k as f64; k],
        means: chosen.iter().map(|&i| samples[i].clone()).collect(),
        covs: vec![global_cov.clone(); k],
        realized: vec![realized_global; k],
    }
}

fn e_step(samples: &[CVector], params: &Params, chunk_size: usize) -> Result<Estep> {
    let k = params.weights.len();
    let factors: Vec<GaussianFactor> = params
        .realized
        .iter()
        .enumerate()
        .map(|(i, c)| {
            GaussianFactor::new(c).map_err(|e| Error::NumericalDomain(format!("component {i}: {e}")))
        })
        .collect::<Result<_>>()?;
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();

    let chunks: Vec<(Vec<f64>, f64)> = samples
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut resp = Vec::with_capacity(chunk.len() * k);
            let mut ll = 0.0;
            let mut scores = vec![0.0; k];
            for x in chunk {
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = log_w[j] + factors[j].log_density(x, &params.means[j]);
                }
                let lse = log_sum_exp(&scores);
                ll += lse;
                resp.extend(scores.iter().map(|s| (s - lse).exp()));
            }
            (resp, ll)
        })
        .collect();
    let mut resp = Vec::with_capacity(samples.len() * k);
    let mut total = 0.0;
    for (r, ll) in chunks {
        resp.extend(r);
        total += ll;
    }
    if !total.is_finite() {
        return Err(Error::NumericalDomain("log-likelihood is not finite".into()));
    }
    Ok(Estep { resp, avg_loglik: total / samples.len() as f64 })
}

#[allow(clippy::too_many_arguments)]
fn m_step<R: Rng>(
    samples: &[CVector],
    resp: &[f64],
    k: usize,
    floor: f64,
    global_cov: &CovarianceRepr,
    dictionary: Option<&ToeplitzDictionary>,
    rng: &mut R,
    iteration: usize,
    report: &mut EmReport,
) -> Params {
    let l = samples.len();
    let n = samples[0].len();
    let mass: Vec<f64> = (0..k).map(|j| (0..l).map(|i| resp[i * k + j]).sum()).collect();

    let updated: Vec<Option<(CVector, CovarianceRepr, CMatrix)>> = (0..k)
        .into_par_iter()
        .map(|j| {
            if !(mass[j] / l as f64 >= 1e-8) {
                return None;
            }
            let mut mean = CVector::zeros(n);
            for (i, s) in samples.iter().enumerate() {
                mean.axpy(real(resp[i * k + j]), s, C64::new(1.0, 0.0));
            }
            mean /= real(mass[j]);
            let scatter = weighted_scatter(samples, Some((resp, k, j)), &mean);
            let cov = structured_cov(&scatter, floor, dictionary);
            let realized = realize(&cov, dictionary);
            Some((mean, cov, realized))
        })
        .collect();

    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut realized = Vec::with_capacity(k);
    for (j, u) in updated.into_iter().enumerate() {
        match u {
            Some((m, c, r)) => {
                weights.push(mass[j] / l as f64);
                means.push(m);
                covs.push(c);
                realized.push(r);
            }
            None => {
                let sample = rng.random_range(0..l);
                log::warn!("EM iteration {iteration}: component {j} collapsed, reseeding from sample {sample}");
                report.reseeded.push(Reseed { iteration, component: j, sample });
                weights.push(1.0 / k as f64);
                means.push(samples[sample].clone());
                covs.push(global_cov.clone());
                realized.push(realize(global_cov, dictionary));
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Params { weights, means, covs, realized }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, rel_frobenius};
    use crate::rng::{complex_normal_vector, rng_from};

    fn dataset(samples: Vec<CVector>) -> ChannelDataset {
        ChannelDataset::new(samples, true).unwrap()
    }

    #[test]
    fn single_component_closed_form() {
        let mut rng = rng_from(4);
        let samples: Vec<CVector> = (0..500)
            .map(|_| complex_normal_vector(&mut rng, 3) + CVector::from_element(3, c64(1.0, -0.5)))
            .collect();
        let ds = dataset(samples.clone());
        let fit = fit_em(&ds, 1, Constraint::Full, &EmOptions::default()).unwrap();
        let mean = samples.iter().fold(CVector::zeros(3), |a, s| a + s) / real(500.0);
        let mut cov = CMatrix::zeros(3, 3);
        for s in &samples {
            let d = s - &mean;
            cov += &d * d.adjoint();
        }
        cov /= real(500.0);
        let m = &fit.model;
        assert_eq!(m.weights(), vec![1.0]);
        assert!((&m.component(0).mean - &mean).norm() < 1e-12);
        // floor is far below the sample eigenvalues here
        assert!(rel_frobenius(m.component(0).realized(), &cov) < 1e-10);
    }

    #[test]
    fn rejects_too_few_samples_and_unnormalized() {
        let ds = dataset(vec![CVector::zeros(2); 3]);
        assert!(fit_em(&ds, 4, Constraint::Full, &EmOptions::default()).is_err());
        let raw = ChannelDataset::new(vec![CVector::from_element(2, c64(1.0, 0.0)); 8], false).unwrap();
        assert!(fit_em(&raw, 2, Constraint::Full, &EmOptions::default()).is_err());
    }

    #[test]
    fn toeplitz_needs_layout() {
        let mut rng = rng_from(1);
        let ds = dataset((0..50).map(|_| complex_normal_vector(&mut rng, 4)).collect());
        assert!(fit_em(&ds, 2, Constraint::Toeplitz, &EmOptions::default()).is_err());
        let opts = EmOptions { layout: Some((2, 2)), max_iters: 5, ..Default::default() };
        let fit = fit_em(&ds, 2, Constraint::Toeplitz, &opts).unwrap();
        for c in fit.model.components() {
            assert!(super::super::check_structure(c.realized(), 2, 2));
        }
    }

    #[test]
    fn chunk_size_does_not_change_result() {
        let mut rng = rng_from(8);
        let ds = dataset((0..300).map(|_| complex_normal_vector(&mut rng, 4)).collect());
        let a = fit_em(&ds, 3, Constraint::Full, &EmOptions { max_iters: 10, chunk_size: 7, ..Default::default() }).unwrap();
        let b = fit_em(&ds, 3, Constraint::Full, &EmOptions { max_iters: 10, chunk_size: 64, ..Default::default() }).unwrap();
        for (x, y) in a.model.components().iter().zip(b.model.components()) {
            assert!((&x.mean - &y.mean).norm() < 1e-10);
        }
    }
}
