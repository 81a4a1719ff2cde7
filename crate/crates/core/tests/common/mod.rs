#![allow(dead_code)]

use limfb::feedback::{FeedbackReport, SchemeTag};
use limfb::gmm::{CovarianceRepr, GmmModel};
use limfb::linalg::{c64, real, CMatrix, CVector, C64};
use limfb::rng::{complex_normal_vector, rng_from, SimRng};

pub fn rng(seed: u64) -> SimRng {
    rng_from(seed)
}

pub fn random_vector(rng: &mut SimRng, n: usize) -> CVector {
    complex_normal_vector(rng, n)
}

pub fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> CMatrix {
    let data = complex_normal_vector(rng, rows * cols);
    CMatrix::from_column_slice(rows, cols, data.as_slice())
}

/// `A A^H / n + shift I`.
pub fn random_psd(rng: &mut SimRng, n: usize, shift: f64) -> CMatrix {
    let a = random_matrix(rng, n, n);
    &a * a.adjoint() / c64(n as f64, 0.0) + CMatrix::identity(n, n) * c64(shift, 0.0)
}

/// Real 2n x 2n embedding `[[Re, -Im], [Im, Re]]` of a complex matrix.
pub fn real_embedding(m: &CMatrix) -> nalgebra::DMatrix<f64> {
    let n = m.nrows();
    nalgebra::DMatrix::from_fn(2 * n, 2 * m.ncols(), |i, j| {
        let x = m[(i % n, j % m.ncols())];
        match (i < n, j < m.ncols()) {
            (true, true) | (false, false) => x.re,
            (true, false) => -x.im,
            (false, true) => x.im,
        }
    })
}

/// Mixture whose components are (numerically) point masses at `means`.
pub fn degenerate_model(means: Vec<CVector>) -> GmmModel {
    let n = means[0].len();
    let k = means.len();
    let covs = vec![CovarianceRepr::Full(CMatrix::identity(n, n) * real(1e-12)); k];
    GmmModel::new(vec![1.0 / k as f64; k], means, covs, 1, n).unwrap()
}

pub fn report(user: usize, index: usize) -> FeedbackReport {
    FeedbackReport { user, index, scheme: SchemeTag::GmmObs, degenerate: false }
}

/// WMMSE on fixed channels with full updates, written out directly.
pub fn deterministic_wmmse(h: &[CVector], init: Vec<CVector>, sigma: f64, rho: f64, iters: usize) -> Vec<CVector> {
    let n = h[0].len();
    let mut v = init;
    for _ in 0..iters {
        let mut a = CMatrix::zeros(n, n);
        let mut b = Vec::new();
        for (j, hj) in h.iter().enumerate() {
            let s: Vec<C64> = v.iter().map(|vm| (hj.transpose() * vm)[0]).collect();
            let denom: f64 = s.iter().map(|x| x.norm_sqr()).sum::<f64>() + sigma;
            let u = s[j].conj() / denom;
            let w = (1.0 / (1.0 - (u * s[j]).re)).clamp(1.0, 1e6);
            a += hj.conjugate() * hj.transpose() * real(w * u.norm_sqr());
            b.push(hj.conjugate() * (u.conj() * w));
        }
        let solve = |lambda: f64| -> Vec<CVector> {
            let m = (&a + CMatrix::identity(n, n) * real(lambda)).try_inverse().unwrap();
            b.iter().map(|bj| &m * bj).collect()
        };
        let power = |x: &[CVector]| x.iter().map(|y| y.norm_squared()).sum::<f64>();
        let unconstrained = a.clone().try_inverse().map(|_| solve(0.0));
        v = match unconstrained {
            Some(x) if power(&x) <= rho => x,
            _ => {
                let (mut lo, mut hi) = (0.0, 1.0);
                while power(&solve(hi)) > rho {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if power(&solve(mid)) > rho {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                solve(hi)
            }
        };
    }
    v
}
