//! Complex Gaussian mixture models: densities, EM fitting with full or
//! block-Toeplitz covariances, responsibilities, observation-domain
//! projection, component sampling and the model file.

mod density;
mod em;
mod io;
mod observation;
mod structure;

use std::sync::Arc;

pub use density::{log_density, log_sum_exp, GaussianFactor};
pub use em::{fit_em, EmOptions, EmReport, FitOutcome, InitStrategy, Reseed};
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use observation::{project_to_observation, ObservationGmm};
pub use structure::{check_structure, toeplitz_mstep, SpectralVector, ToeplitzDictionary};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, psd_sqrt, CMatrix, CVector, C64};
use crate::rng::{complex_normal_vector, rng_from};

/// Covariance structure imposed during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    Full,
    Toeplitz,
}

impl Constraint {
    pub fn name(&self) -> &'static str {
        match self {
            Constraint::Full => "full",
            Constraint::Toeplitz => "toeplitz",
        }
    }
}

impl std::str::FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Constraint::Full),
            "toeplitz" => Ok(Constraint::Toeplitz),
            other => invalid(format!("unknown covariance constraint {other:?} (expected full or toeplitz)")),
        }
    }
}

/// Stored form of one component covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceRepr {
    Full(CMatrix),
    /// Nonnegative coefficients over the Toeplitz dictionary.
    Spectral(SpectralVector),
}

#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub mean: CVector,
    pub covariance: CovarianceRepr,
    realized: CMatrix,
    factor: Option<GaussianFactor>,
    sqrt_cov: CMatrix,
}

impl Component {
    pub fn realized(&self) -> &CMatrix {
        &self.realized
    }

    /// Cholesky factor, absent when the covariance is only semidefinite.
    pub fn factor(&self) -> Option<&GaussianFactor> {
        self.factor.as_ref()
    }

    /// A square root `R` with `R R^H = C`.
    pub fn sqrt_cov(&self) -> &CMatrix {
        &self.sqrt_cov
    }
}

/// Number of covariance parameters a model transfer has to carry.
pub fn param_count(k: usize, n: usize, constraint: Constraint) -> u64 {
    let (k, n) = (k as u64, n as u64);
    match constraint {
        Constraint::Full => k * n * (n + 1) / 2,
        Constraint::Toeplitz => 4 * k * n,
    }
}

/// A fitted mixture. Immutable once built; all per-component factorizations
/// are computed up front.
#[derive(Debug, Clone)]
pub struct GmmModel {
    components: Vec<Component>,
    constraint: Constraint,
    n_vert: usize,
    n_horiz: usize,
    dictionary: Option<Arc<ToeplitzDictionary>>,
}

impl GmmModel {
    /// Builds a model on an `n_vert x n_horiz` array layout. All covariances
    /// must share one representation.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<CVector>,
        covariances: Vec<CovarianceRepr>,
        n_vert: usize,
        n_horiz: usize,
    ) -> Result<Self> {
        let dictionary = match covariances.first() {
            Some(CovarianceRepr::Spectral(_)) => Some(Arc::new(ToeplitzDictionary::new(n_vert, n_horiz)?)),
            _ => None,
        };
        Self::with_dictionary(weights, means, covariances, n_vert, n_horiz, dictionary)
    }

    /// Full-covariance model on a one-row layout.
    pub fn from_full(weights: Vec<f64>, means: Vec<CVector>, covariances: Vec<CMatrix>) -> Result<Self> {
        let n = means.first().map_or(0, |m| m.len());
        Self::new(weights, means, covariances.into_iter().map(CovarianceRepr::Full).collect(), 1, n)
    }

    pub(crate) fn with_dictionary(
        weights: Vec<f64>,
        means: Vec<CVector>,
        covariances: Vec<CovarianceRepr>,
        n_vert: usize,
        n_horiz: usize,
        dictionary: Option<Arc<ToeplitzDictionary>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return invalid("a mixture needs at least one component");
        }
        if means.len() != k || covariances.len() != k {
            return invalid(format!("{k} weights but {} means and {} covariances", means.len(), covariances.len()));
        }
        let n = n_vert * n_horiz;
        if n == 0 {
            return invalid("layout must be non-empty");
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return invalid("mixture weights must be positive and finite");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("mixture weights sum to {total}, expected 1"));
        }
        let spectral = matches!(covariances[0], CovarianceRepr::Spectral(_));
        let constraint = if spectral { Constraint::Toeplitz } else { Constraint::Full };
        if let Some(d) = &dictionary {
            if d.n_vert() != n_vert || d.n_horiz() != n_horiz {
                return invalid("dictionary layout does not match the model layout");
            }
        }
        let mut components = Vec::with_capacity(k);
        for (i, ((w, mean), cov)) in weights.iter().zip(means).zip(covariances).enumerate() {
            if mean.len() != n {
                return invalid(format!("mean {i} has dimension {}, expected {n}", mean.len()));
            }
            let realized = match (&cov, &dictionary) {
                (CovarianceRepr::Full(c), _) if !spectral => {
                    if c.nrows() != n || c.ncols() != n {
                        return invalid(format!("covariance {i} is {}x{}, expected {n}x{n}", c.nrows(), c.ncols()));
                    }
                    crate::linalg::hermitian_part(c)
                }
                (CovarianceRepr::Spectral(c), Some(d)) if spectral => {
                    if c.len() != 4 * n {
                        return invalid(format!("spectral vector {i} has length {}, expected {}", c.len(), 4 * n));
                    }
                    if c.iter().any(|&v| !(v >= 0.0)) {
                        return invalid(format!("spectral vector {i} has negative or non-finite entries"));
                    }
                    d.realize(c)
                }
                _ => return invalid("all covariances must share one representation"),
            };
            if realized.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::NumericalDomain(format!("covariance {i} is not finite")));
            }
            let factor = GaussianFactor::new(&realized).ok();
            let sqrt_cov = match cholesky(&realized) {
                Ok(ch) => ch.unpack(),
                Err(_) => {
                    log::warn!("component {i}: covariance is not positive definite, using an eigen square root");
                    psd_sqrt(&realized)
                }
            };
            components.push(Component { weight: w / total, mean, covariance: cov, realized, factor, sqrt_cov });
        }
        Ok(GmmModel { components, constraint, n_vert, n_horiz, dictionary })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.n_vert * self.n_horiz
    }

    pub fn n_vert(&self) -> usize {
        self.n_vert
    }

    pub fn n_horiz(&self) -> usize {
        self.n_horiz
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Component {
        &self.components[k]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn dictionary(&self) -> Option<&ToeplitzDictionary> {
        self.dictionary.as_deref()
    }

    /// `log2 K` when the component count is a power of two.
    pub fn bits(&self) -> Option<u8> {
        let k = self.num_components();
        k.is_power_of_two().then(|| k.trailing_zeros() as u8)
    }

    /// Covariance parameters stored by this model.
    pub fn param_count(&self) -> u64 {
        param_count(self.num_components(), self.dim(), self.constraint)
    }
}

/// Anything that scores a vector against `K` weighted Gaussian components.
pub trait Mixture {
    fn num_components(&self) -> usize;
    fn dim(&self) -> usize;
    /// `log pi_k + log N(x; mu_k, C_k)`; the caller has checked dimensions.
    fn log_weighted_density(&self, k: usize, x: &CVector) -> Result<f64>;
    /// Mixture weights, used when no component assigns finite density.
    fn prior(&self) -> Vec<f64>;
}

impl Mixture for GmmModel {
    fn num_components(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        GmmModel::dim(self)
    }

    fn log_weighted_density(&self, k: usize, x: &CVector) -> Result<f64> {
        let c = &self.components[k];
        let factor = c.factor.as_ref().ok_or_else(|| {
            Error::NumericalDomain(format!("component {k} covariance is singular; channel-domain density undefined"))
        })?;
        Ok(c.weight.ln() + factor.log_density(x, &c.mean))
    }

    fn prior(&self) -> Vec<f64> {
        self.weights()
    }
}

/// Unnormalized log posterior scores, one per component.
pub fn log_scores<M: Mixture + ?Sized>(model: &M, x: &CVector) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return invalid(format!("vector has dimension {}, model expects {}", x.len(), model.dim()));
    }
    (0..model.num_components()).map(|k| model.log_weighted_density(k, x)).collect()
}

/// Normalizes log scores into a probability vector via log-sum-exp. When no
/// score is finite the prior is returned instead.
pub fn normalize_scores(scores: &[f64], prior: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    if !lse.is_finite() {
        let total: f64 = prior.iter().sum();
        return prior.iter().map(|p| p / total).collect();
    }
    let mut out: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Posterior component probabilities `p(k | x)`.
pub fn responsibilities<M: Mixture + ?Sized>(model: &M, x: &CVector) -> Result<Vec<f64>> {
    let scores = log_scores(model, x)?;
    Ok(normalize_scores(&scores, &model.prior()))
}

/// Index of the largest score; the smallest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `count` i.i.d. draws `mu_k + C_k^{1/2} w` from component `k` (zero-based).
pub fn sample_component(model: &GmmModel, k: usize, count: usize, seed: u64) -> Result<Vec<CVector>> {
    if k >= model.num_components() {
        return invalid(format!("component {k} out of range for K = {}", model.num_components()));
    }
    let mut rng = rng_from(seed);
    let c = &model.components[k];
    Ok((0..count).map(|_| draw(c, &mut rng)).collect())
}

pub(crate) fn draw<R: rand::Rng + ?Sized>(c: &Component, rng: &mut R) -> CVector {
    let w = complex_normal_vector(rng, c.mean.len());
    let mut h = c.mean.clone();
    h.gemv(C64::new(1.0, 0.0), &c.sqrt_cov, &w, C64::new(1.0, 0.0));
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, real};

    fn scalar_model(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> GmmModel {
        GmmModel::from_full(
            weights,
            means.into_iter().map(|m| CVector::from_element(1, real(m))).collect(),
            vars.into_iter().map(|v| CMatrix::from_element(1, 1, real(v))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn table_one_counts() {
        assert_eq!(param_count(64, 64, Constraint::Full), 133_120);
        assert_eq!(param_count(64, 64, Constraint::Toeplitz), 16_384);
        assert_eq!(param_count(256, 64, Constraint::Full), 532_480);
    }

    #[test]
    fn single_component_responsibility() {
        let m = scalar_model(vec![1.0], vec![0.0], vec![1.0]);
        let r = responsibilities(&m, &CVector::from_element(1, c64(3.0, -2.0))).unwrap();
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn identical_components_return_prior() {
        let m = scalar_model(vec![0.3, 0.7], vec![1.0, 1.0], vec![2.0, 2.0]);
        for x in [c64(0.0, 0.0), c64(5.0, 1.0), c64(-3.0, 2.0)] {
            let r = responsibilities(&m, &CVector::from_element(1, x)).unwrap();
            assert!((r[0] - 0.3).abs() < 1e-12 && (r[1] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_bayes_posterior() {
        let m = scalar_model(vec![0.4, 0.6], vec![0.0, 2.0], vec![1.0, 0.5]);
        let x = c64(1.2, 0.3);
        // pi_k / (pi s_k) exp(-|x - m_k|^2 / s_k)
        let p0 = 0.4 / (std::f64::consts::PI * 1.0) * (-(x - 0.0).norm_sqr() / 1.0).exp();
        let p1 = 0.6 / (std::f64::consts::PI * 0.5) * (-(x - 2.0).norm_sqr() / 0.5).exp();
        let r = responsibilities(&m, &CVector::from_element(1, x)).unwrap();
        assert!((r[0] - p0 / (p0 + p1)).abs() < 1e-12);
        assert!((r[1] - p1 / (p0 + p1)).abs() < 1e-12);
    }

    #[test]
    fn far_outlier_does_not_produce_nan() {
        let m = scalar_model(vec![0.5, 0.5], vec![0.0, 1.0], vec![1e-6, 1e-6]);
        let r = responsibilities(&m, &CVector::from_element(1, c64(1e150, 0.0))).unwrap();
        assert!(r.iter().all(|p| p.is_finite()));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    #[test]
    fn vanishing_covariance_samples_equal_mean() {
        let mean = CVector::from_vec(vec![c64(1.0, -1.0), c64(0.5, 2.0), c64(0.0, 0.0)]);
        let m = GmmModel::from_full(vec![1.0], vec![mean.clone()], vec![CMatrix::identity(3, 3) * real(1e-12)]).unwrap();
        for s in sample_component(&m, 0, 100, 9).unwrap() {
            assert!((s - &mean).camax() < 1e-5);
        }
    }

    #[test]
    fn sampling_is_seeded_and_checks_index() {
        let m = scalar_model(vec![1.0], vec![0.0], vec![1.0]);
        assert_eq!(sample_component(&m, 0, 5, 1).unwrap(), sample_component(&m, 0, 5, 1).unwrap());
        assert!(sample_component(&m, 1, 5, 1).is_err());
    }

    #[test]
    fn semidefinite_covariance_samples_via_eigen_root() {
        let c = CMatrix::from_diagonal(&CVector::from_vec(vec![real(1.0), real(0.0)]));
        let m = GmmModel::from_full(vec![1.0], vec![CVector::zeros(2)], vec![c]).unwrap();
        assert!(m.component(0).factor().is_none());
        let s = sample_component(&m, 0, 50, 2).unwrap();
        assert!(s.iter().all(|v| v[1].norm() < 1e-12));
        assert!(responsibilities(&m, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        let mean = vec![CVector::zeros(1); 2];
        let cov = vec![CMatrix::identity(1, 1); 2];
        assert!(GmmModel::from_full(vec![0.5, 0.6], mean.clone(), cov.clone()).is_err());
        assert!(GmmModel::from_full(vec![1.0, 0.0], mean, cov).is_err());
    }
}
