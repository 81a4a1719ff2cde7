//! Pilot matrices and noisy pilot observations `y = P h + n`.

use crate::error::{invalid, Result};
use crate::linalg::{dft_unitary, kron, real, CMatrix, CVector, C64};
use crate::rng::{complex_normal_vector, rng_from};
use crate::scene::ArrayGeometry;

/// Pilot matrix with its noise and power bookkeeping.
#[derive(Debug, Clone)]
pub struct PilotSetup {
    /// `n_p x N`; every row has squared norm `rho`.
    pub p: CMatrix,
    /// Noise variance (linear).
    pub sigma_n2: f64,
    /// Transmit power budget (linear).
    pub rho: f64,
}

impl PilotSetup {
    pub fn num_pilots(&self) -> usize {
        self.p.nrows()
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn with_noise(mut self, sigma_n2: f64) -> Self {
        self.sigma_n2 = sigma_n2;
        self
    }

    /// Sets the noise variance from an SNR in dB, defined as `rho / sigma_n2`.
    pub fn with_snr_db(self, snr_db: f64) -> Self {
        let rho = self.rho;
        self.with_noise(rho * 10f64.powf(-snr_db / 10.0))
    }

    pub fn snr(&self) -> f64 {
        self.rho / self.sigma_n2
    }

    /// `P h + sigma_n w` for a given standard complex Gaussian draw `w`.
    pub fn observe_with(&self, h: &CVector, w: &CVector) -> CVector {
        let mut y = w * real(self.sigma_n2.sqrt());
        y.gemv(C64::new(1.0, 0.0), &self.p, h, C64::new(1.0, 0.0));
        y
    }
}

/// Flat indices `round(i N / n_p)`, `i = 0..n_p`.
pub fn pilot_rows(n: usize, n_p: usize) -> Vec<usize> {
    (0..n_p).map(|i| ((i * n) as f64 / n_p as f64).round() as usize).collect()
}

/// Selects `n_p` evenly spaced rows of the unitary 2D-DFT `F_v ⊗ F_h` and
/// scales each to squared norm `rho`. The noise variance starts at zero.
pub fn build_pilot_matrix(geometry: &ArrayGeometry, n_p: usize, rho: f64) -> Result<PilotSetup> {
    geometry.validate()?;
    let n = geometry.num_antennas();
    if n_p == 0 || n_p > n {
        return invalid(format!("pilot count must lie in 1..={n}, got {n_p}"));
    }
    if !(rho > 0.0) {
        return invalid("power budget must be positive");
    }
    let full = kron(&dft_unitary(geometry.n_vert), &dft_unitary(geometry.n_horiz));
    let rows = pilot_rows(n, n_p);
    let mut p = CMatrix::zeros(n_p, n);
    for (dst, &src) in rows.iter().enumerate() {
        let row = full.row(src);
        let scale = rho.sqrt() / row.norm();
        p.set_row(dst, &(row * real(scale)));
    }
    Ok(PilotSetup { p, sigma_n2: 0.0, rho })
}

/// One noisy pilot observation; the noise draw is fixed by `seed`.
pub fn observe(setup: &PilotSetup, h: &CVector, seed: u64) -> Result<CVector> {
    if h.len() != setup.dim() {
        return invalid(format!("channel has dimension {}, pilots expect {}", h.len(), setup.dim()));
    }
    let mut rng = rng_from(seed);
    let w = complex_normal_vector(&mut rng, setup.num_pilots());
    Ok(setup.observe_with(h, &w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    #[test]
    fn full_pilots_are_scaled_unitary() {
        let g = ArrayGeometry::desk_scale();
        let s = build_pilot_matrix(&g, 16, 1.0).unwrap();
        let gram = &s.p * s.p.adjoint();
        assert!((gram - CMatrix::identity(16, 16)).norm() < 1e-12);
        let s2 = build_pilot_matrix(&g, 16, 2.5).unwrap();
        assert!((&s2.p * s2.p.adjoint() - CMatrix::identity(16, 16) * real(2.5)).norm() < 1e-12);
    }

    #[test]
    fn rows_have_power_rho() {
        let g = ArrayGeometry::paper_scale();
        for n_p in [1, 3, 8, 17, 64] {
            let s = build_pilot_matrix(&g, n_p, 0.7).unwrap();
            for r in 0..n_p {
                assert!((s.p.row(r).norm() - 0.7f64.sqrt()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn two_by_two_selects_rows_zero_and_two() {
        let g = ArrayGeometry::new(2, 2, 1.0, 0.5).unwrap();
        let s = build_pilot_matrix(&g, 2, 1.0).unwrap();
        // F_2 = [[1, 1], [1, -1]] / sqrt 2; kron rows 0 and 2, rescaled to unit norm.
        let expected = [[0.5, 0.5, 0.5, 0.5], [0.5, 0.5, -0.5, -0.5]];
        for r in 0..2 {
            for c in 0..4 {
                assert!((s.p[(r, c)] - c64(expected[r][c], 0.0)).norm() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn too_many_pilots_rejected() {
        assert!(build_pilot_matrix(&ArrayGeometry::desk_scale(), 17, 1.0).is_err());
        assert!(build_pilot_matrix(&ArrayGeometry::desk_scale(), 0, 1.0).is_err());
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let g = ArrayGeometry::desk_scale();
        let s = build_pilot_matrix(&g, 4, 1.0).unwrap();
        let h = CVector::from_fn(16, |i, _| c64(i as f64, 1.0));
        assert_eq!(observe(&s, &h, 3).unwrap(), &s.p * &h);
        let noisy = s.clone().with_noise(0.1);
        assert_eq!(observe(&noisy, &h, 3).unwrap(), observe(&noisy, &h, 3).unwrap());
        assert_ne!(observe(&noisy, &h, 3).unwrap(), observe(&noisy, &h, 4).unwrap());
    }

    #[test]
    fn snr_bookkeeping() {
        let s = build_pilot_matrix(&ArrayGeometry::desk_scale(), 4, 1.0).unwrap().with_snr_db(10.0);
        assert!((s.sigma_n2 - 0.1).abs() < 1e-15);
        assert!((s.snr() - 10.0).abs() < 1e-12);
    }
}
