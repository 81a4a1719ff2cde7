//! The mixture seen through the pilots: component `k` of `y = P h + n` has
//! mean `P mu_k` and covariance `P C_k P^H + sigma_n2 I`.

use super::density::GaussianFactor;
use super::{Constraint, GmmModel, Mixture};
use crate::error::{invalid, Error, Result};
use crate::feedback::PilotSetup;
use crate::linalg::{hermitian_part, real, CMatrix, CVector};

/// Observation-domain mixture with cached factorizations, so scoring one
/// observation costs `O(K n_p^2)` whatever the antenna count.
#[derive(Debug, Clone)]
pub struct ObservationGmm {
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    means: Vec<CVector>,
    covariances: Vec<CMatrix>,
    factors: Vec<GaussianFactor>,
    sigma_n2: f64,
    constraint: Constraint,
}

impl ObservationGmm {
    pub fn means(&self) -> &[CVector] {
        &self.means
    }

    pub fn covariances(&self) -> &[CMatrix] {
        &self.covariances
    }

    pub fn factors(&self) -> &[GaussianFactor] {
        &self.factors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    /// Covariance structure of the channel model this was projected from.
    pub fn constraint(&self) -> Constraint {
        self.constraint
    }
}

impl Mixture for ObservationGmm {
    fn num_components(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_weighted_density(&self, k: usize, y: &CVector) -> Result<f64> {
        Ok(self.log_weights[k] + self.factors[k].log_density(y, &self.means[k]))
    }

    fn prior(&self) -> Vec<f64> {
        self.weights.clone()
    }
}

pub fn project_to_observation(model: &GmmModel, setup: &PilotSetup) -> Result<ObservationGmm> {
    if setup.dim() != model.dim() {
        return invalid(format!("pilots act on dimension {}, model has {}", setup.dim(), model.dim()));
    }
    if !(setup.sigma_n2 >= 0.0) {
        return invalid("noise variance must be non-negative");
    }
    let p = &setup.p;
    let n_p = setup.num_pilots();
    let mut means = Vec::with_capacity(model.num_components());
    let mut covariances = Vec::with_capacity(model.num_components());
    let mut factors = Vec::with_capacity(model.num_components());
    for (k, c) in model.components().iter().enumerate() {
        means.push(p * &c.mean);
        let mut cov = hermitian_part(&(p * c.realized() * p.adjoint()));
        for i in 0..n_p {
            cov[(i, i)] += real(setup.sigma_n2);
        }
        let factor = GaussianFactor::new(&cov).map_err(|_| {
            Error::NumericalDomain(format!(
                "observation covariance of component {k} is not positive definite; use a noise variance > 0"
            ))
        })?;
        covariances.push(cov);
        factors.push(factor);
    }
    let weights = model.weights();
    Ok(ObservationGmm {
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        weights,
        means,
        covariances,
        factors,
        sigma_n2: setup.sigma_n2,
        constraint: model.constraint(),
    })
}
