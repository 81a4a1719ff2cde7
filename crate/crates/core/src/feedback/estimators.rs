//! Channel estimators used ahead of codebook selection: the GMM estimator (a
//! responsibility-weighted mix of per-component LMMSE filters), the
//! sample-covariance LMMSE estimator and OMP over an oversampled 2D-DFT
//! dictionary.

use crate::error::{invalid, Error, Result};
use crate::gmm::{normalize_scores, log_scores, project_to_observation, GmmModel, ObservationGmm};
use crate::linalg::{cholesky, dft_columns, hermitian_part, kron, real, solve_hermitian, CMatrix, CVector, C64};
use crate::scene::ChannelDataset;

use super::PilotSetup;

/// `C P^H (P C P^H + sigma_n2 I)^{-1}`.
fn lmmse_filter(cov: &CMatrix, setup: &PilotSetup) -> Result<CMatrix> {
    let p = &setup.p;
    let pc = p * cov;
    let mut obs_cov = hermitian_part(&(&pc * p.adjoint()));
    for i in 0..obs_cov.nrows() {
        obs_cov[(i, i)] += real(setup.sigma_n2);
    }
    let chol = cholesky(&obs_cov)
        .map_err(|_| Error::NumericalDomain("observation covariance is singular; use a noise variance > 0".into()))?;
    Ok(chol.solve(&pc).adjoint())
}

/// Biased sample mean and covariance of a dataset.
pub fn sample_moments(dataset: &ChannelDataset) -> Result<(CVector, CMatrix)> {
    if dataset.is_empty() {
        return invalid("moments of an empty dataset");
    }
    let n = dataset.dim();
    let l = dataset.len() as f64;
    let mean = dataset.samples.iter().fold(CVector::zeros(n), |a, s| a + s) / real(l);
    let mut cov = CMatrix::zeros(n, n);
    for s in &dataset.samples {
        let d = s - &mean;
        cov.gerc(C64::new(1.0, 0.0), &d, &d, C64::new(1.0, 0.0));
    }
    Ok((mean, hermitian_part(&cov) / real(l)))
}

/// LMMSE estimator built from first- and second-order statistics.
#[derive(Debug, Clone)]
pub struct LmmseEstimator {
    mean: CVector,
    observed_mean: CVector,
    filter: CMatrix,
}

impl LmmseEstimator {
    pub fn new(mean: &CVector, cov: &CMatrix, setup: &PilotSetup) -> Result<Self> {
        let n = setup.dim();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return invalid(format!("moments must have dimension {n}"));
        }
        Ok(LmmseEstimator { mean: mean.clone(), observed_mean: &setup.p * mean, filter: lmmse_filter(cov, setup)? })
    }

    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        if y.len() != self.observed_mean.len() {
            return invalid(format!("observation has dimension {}, expected {}", y.len(), self.observed_mean.len()));
        }
        Ok(&self.mean + &self.filter * (y - &self.observed_mean))
    }
}

/// `m + S P^H (P S P^H + sigma_n2 I)^{-1} (y - P m)`.
pub fn estimate_lmmse(sample_mean: &CVector, sample_cov: &CMatrix, setup: &PilotSetup, y: &CVector) -> Result<CVector> {
    LmmseEstimator::new(sample_mean, sample_cov, setup)?.estimate(y)
}

/// GMM channel estimator with per-component filters cached for one pilot
/// setup and noise level.
#[derive(Debug, Clone)]
pub struct GmmEstimator {
    observation: ObservationGmm,
    means: Vec<CVector>,
    filters: Vec<CMatrix>,
}

impl GmmEstimator {
    pub fn new(model: &GmmModel, setup: &PilotSetup) -> Result<Self> {
        let observation = project_to_observation(model, setup)?;
        let filters = model.components().iter().map(|c| lmmse_filter(c.realized(), setup)).collect::<Result<_>>()?;
        let means = model.components().iter().map(|c| c.mean.clone()).collect();
        Ok(GmmEstimator { observation, means, filters })
    }

    pub fn observation_model(&self) -> &ObservationGmm {
        &self.observation
    }

    /// `sum_k p(k | y) (mu_k + W_k (y - P mu_k))`.
    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        let scores = log_scores(&self.observation, y)?;
        let resp = normalize_scores(&scores, self.observation.weights());
        let mut h = CVector::zeros(self.means[0].len());
        for (k, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let innovation = y - &self.observation.means()[k];
            let local = &self.means[k] + &self.filters[k] * innovation;
            h.axpy(real(*r), &local, C64::new(1.0, 0.0));
        }
        Ok(h)
    }
}

pub fn estimate_gmm(model: &GmmModel, setup: &PilotSetup, y: &CVector) -> Result<CVector> {
    GmmEstimator::new(model, setup)?.estimate(y)
}

/// Oversampled 2D-DFT dictionary: `factor * n` unit-norm atoms per dimension.
pub fn oversampled_dictionary(n_vert: usize, n_horiz: usize, factor: usize) -> CMatrix {
    kron(
        &dft_columns(n_vert, factor * n_vert, factor * n_vert),
        &dft_columns(n_horiz, factor * n_horiz, factor * n_horiz),
    )
}

/// OMP stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpStop {
    /// Stop once the residual norm is at or below this value.
    pub residual_threshold: f64,
    pub max_support: usize,
}

impl OmpStop {
    /// Residual at the noise level `sqrt(n_p) sigma_n`, support capped at `n_p`.
    pub fn for_setup(setup: &PilotSetup) -> Self {
        let n_p = setup.num_pilots();
        OmpStop { residual_threshold: (n_p as f64 * setup.sigma_n2).sqrt(), max_support: n_p }
    }
}

#[derive(Debug, Clone)]
pub struct OmpOutcome {
    /// Selected atom indices in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients on `support`.
    pub coefficients: CVector,
    pub residual_norm: f64,
}

/// Greedy sparse recovery of `y ≈ A x`, refitting all selected atoms by least
/// squares after each selection.
pub fn omp_recover(sensing: &CMatrix, y: &CVector, stop: &OmpStop) -> Result<OmpOutcome> {
    if y.len() != sensing.nrows() {
        return invalid(format!("observation has dimension {}, sensing matrix has {} rows", y.len(), sensing.nrows()));
    }
    let norms: Vec<f64> = sensing.column_iter().map(|c| c.norm()).collect();
    let max_support = stop.max_support.min(sensing.nrows()).min(sensing.ncols());
    // Absolute slack so a noiseless exact fit terminates.
    let threshold = stop.residual_threshold + 1e-12 * y.norm();
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients = CVector::zeros(0);
    let mut residual = y.clone();
    while residual.norm() > threshold && support.len() < max_support {
        let corr = sensing.ad_mul(&residual);
        let mut best = None;
        let mut best_score = 0.0;
        for (i, c) in corr.iter().enumerate() {
            if norms[i] <= 1e-12 || support.contains(&i) {
                continue;
            }
            let score = c.norm() / norms[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(atom) = best else { break };
        support.push(atom);
        let sub = CMatrix::from_fn(sensing.nrows(), support.len(), |r, c| sensing[(r, support[c])]);
        let gram = sub.adjoint() * &sub;
        let rhs = sub.ad_mul(y);
        let (x, ridge) = solve_hermitian(&gram, &CMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), 0.0);
        if ridge > 0.0 {
            log::debug!("OMP refit on {} atoms needed ridge {ridge:.1e}", support.len());
        }
        coefficients = x.column(0).into_owned();
        residual = y - &sub * &coefficients;
    }
    Ok(OmpOutcome { residual_norm: residual.norm(), support, coefficients })
}

/// OMP estimator with the effective sensing matrix `P D` cached.
#[derive(Debug, Clone)]
pub struct OmpEstimator {
    dictionary: CMatrix,
    sensing: CMatrix,
    stop: OmpStop,
}

impl OmpEstimator {
    pub fn new(setup: &PilotSetup, dictionary: CMatrix, stop: OmpStop) -> Result<Self> {
        if dictionary.nrows() != setup.dim() {
            return invalid(format!("dictionary rows {} do not match channel dimension {}", dictionary.nrows(), setup.dim()));
        }
        let sensing = &setup.p * &dictionary;
        Ok(OmpEstimator { dictionary, sensing, stop })
    }

    pub fn sensing(&self) -> &CMatrix {
        &self.sensing
    }

    pub fn recover(&self, y: &CVector) -> Result<OmpOutcome> {
        omp_recover(&self.sensing, y, &self.stop)
    }

    pub fn estimate(&self, y: &CVector) -> Result<CVector> {
        let out = self.recover(y)?;
        let mut h = CVector::zeros(self.dictionary.nrows());
        for (c, &atom) in out.coefficients.iter().zip(&out.support) {
            h.axpy(*c, &self.dictionary.column(atom).into_owned(), C64::new(1.0, 0.0));
        }
        Ok(h)
    }
}

pub fn estimate_omp(setup: &PilotSetup, dictionary: &CMatrix, y: &CVector, stop: &OmpStop) -> Result<CVector> {
    OmpEstimator::new(setup, dictionary.clone(), *stop)?.estimate(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::build_pilot_matrix;
    use crate::linalg::c64;
    use crate::rng::{complex_normal, rng_from};
    use crate::scene::ArrayGeometry;

    fn random_psd(n: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from(seed);
        let a = CMatrix::from_fn(n, n, |_, _| complex_normal(&mut rng));
        &a * a.adjoint() + CMatrix::identity(n, n) * real(0.05)
    }

    #[test]
    fn single_component_noiseless_identity_returns_observation() {
        let cov = random_psd(3, 1);
        let m = GmmModel::from_full(vec![1.0], vec![CVector::zeros(3)], vec![cov]).unwrap();
        let setup = PilotSetup { p: CMatrix::identity(3, 3), sigma_n2: 1e-12, rho: 1.0 };
        let y = CVector::from_vec(vec![c64(1.0, 2.0), c64(-0.5, 0.0), c64(0.3, -0.7)]);
        let h = estimate_gmm(&m, &setup, &y).unwrap();
        assert!((h - &y).norm() < 1e-4);
    }

    #[test]
    fn zero_innovation_returns_mean() {
        let mean = CVector::from_vec(vec![c64(0.2, 0.1), c64(1.0, -1.0), c64(0.0, 0.5), c64(-0.3, 0.0)]);
        let cov = random_psd(4, 2);
        let setup = build_pilot_matrix(&ArrayGeometry::new(2, 2, 1.0, 0.5).unwrap(), 2, 1.0).unwrap().with_noise(0.1);
        let y = &setup.p * &mean;
        let m = GmmModel::from_full(vec![1.0], vec![mean.clone()], vec![cov.clone()]).unwrap();
        assert!((estimate_gmm(&m, &setup, &y).unwrap() - &mean).norm() < 1e-12);
        assert!((estimate_lmmse(&mean, &cov, &setup, &y).unwrap() - &mean).norm() < 1e-12);
    }

    #[test]
    fn lmmse_matches_direct_formula() {
        let mut rng = rng_from(3);
        let n = 4;
        let mean = CVector::from_fn(n, |_, _| complex_normal(&mut rng));
        let cov = random_psd(n, 4);
        let p = CMatrix::from_fn(2, n, |_, _| complex_normal(&mut rng));
        let setup = PilotSetup { p: p.clone(), sigma_n2: 0.3, rho: 1.0 };
        let y = CVector::from_fn(2, |_, _| complex_normal(&mut rng));
        let inv = (&p * &cov * p.adjoint() + CMatrix::identity(2, 2) * real(0.3)).try_inverse().unwrap();
        let expected = &mean + &cov * p.adjoint() * inv * (&y - &p * &mean);
        let got = estimate_lmmse(&mean, &cov, &setup, &y).unwrap();
        assert!((got - &expected).norm() <= 1e-10 * expected.norm());
    }

    #[test]
    fn omp_single_atom_noiseless() {
        let g = ArrayGeometry::desk_scale();
        let setup = build_pilot_matrix(&g, 8, 1.0).unwrap();
        let dict = oversampled_dictionary(2, 8, 2);
        let est = OmpEstimator::new(&setup, dict.clone(), OmpStop::for_setup(&setup)).unwrap();
        let atom = 5;
        let h = dict.column(atom) * c64(1.5, -0.5);
        let y = &setup.p * &h;
        let out = est.recover(&y).unwrap();
        assert!(out.residual_norm < 1e-8);
        let h_hat = est.estimate(&y).unwrap();
        assert!((&setup.p * &h_hat - &y).norm() < 1e-8);
    }

    #[test]
    fn omp_zero_observation() {
        let setup = build_pilot_matrix(&ArrayGeometry::desk_scale(), 4, 1.0).unwrap().with_noise(0.1);
        let dict = oversampled_dictionary(2, 8, 2);
        let h = estimate_omp(&setup, &dict, &CVector::zeros(4), &OmpStop::for_setup(&setup)).unwrap();
        assert_eq!(h, CVector::zeros(16));
        let out = omp_recover(&(&setup.p * &dict), &CVector::zeros(4), &OmpStop::for_setup(&setup)).unwrap();
        assert!(out.support.is_empty());
    }

    #[test]
    fn sample_moments_of_two_points() {
        let a = CVector::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0)]);
        let b = CVector::from_vec(vec![c64(-1.0, 0.0), c64(0.0, 2.0)]);
        let ds = ChannelDataset::new(vec![a, b], true).unwrap();
        let (m, c) = sample_moments(&ds).unwrap();
        assert_eq!(m, CVector::from_vec(vec![c64(0.0, 0.0), c64(0.0, 1.0)]));
        assert!((c[(0, 0)].re - 1.0).abs() < 1e-15 && (c[(1, 1)].re - 1.0).abs() < 1e-15);
        assert!((c[(0, 1)] - c64(0.0, 1.0)).norm() < 1e-15);
    }
}
