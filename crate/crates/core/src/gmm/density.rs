//! Circularly-symmetric complex Gaussian densities in the log domain.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, chol_logdet, CMatrix, CVector, C64};

/// Cholesky factor of a covariance, cached so each density evaluation is a
/// single triangular solve.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    lower: CMatrix,
    /// Row-major copy of `lower` with reciprocal diagonal, for the solve loop.
    rows: Vec<C64>,
    logdet: f64,
}

impl GaussianFactor {
    pub fn new(cov: &CMatrix) -> Result<Self> {
        let chol = cholesky(cov)?;
        let logdet = chol_logdet(&chol);
        if !logdet.is_finite() {
            return Err(Error::NumericalDomain("covariance determinant is not finite".into()));
        }
        let lower = chol.unpack();
        let n = lower.nrows();
        let rows = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                if i == j {
                    C64::new(1.0 / lower[(i, i)].re, 0.0)
                } else {
                    lower[(i, j)]
                }
            })
            .collect();
        Ok(GaussianFactor { lower, rows, logdet })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn lower(&self) -> &CMatrix {
        &self.lower
    }

    /// `(x - mean)^H C^{-1} (x - mean)`.
    pub fn mahalanobis(&self, x: &CVector, mean: &CVector) -> f64 {
        // Forward substitution L z = x - mean, accumulating |z|^2.
        let n = self.dim();
        let mut z = vec![C64::new(0.0, 0.0); n];
        let mut total = 0.0;
        for (i, row) in self.rows.chunks_exact(n).enumerate() {
            let dot = row[..i].iter().zip(&z[..i]).fold(C64::new(0.0, 0.0), |acc, (l, zj)| acc + l * zj);
            let zi = (x[i] - mean[i] - dot) * row[i].re;
            total += zi.norm_sqr();
            z[i] = zi;
        }
        total
    }

    pub fn log_density(&self, x: &CVector, mean: &CVector) -> f64 {
        -(self.dim() as f64) * PI.ln() - self.logdet - self.mahalanobis(x, mean)
    }
}

/// `log N_C(x; mean, cov)`.
pub fn log_density(x: &CVector, mean: &CVector, cov: &CMatrix) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return invalid(format!(
            "dimension mismatch: x {}, mean {}, covariance {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        ));
    }
    Ok(GaussianFactor::new(cov)?.log_density(x, mean))
}

/// `log sum exp` of the scores; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}
