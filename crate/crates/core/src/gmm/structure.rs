//! Block-Toeplitz covariances with Toeplitz blocks, parameterized by a
//! nonnegative spectral vector over a fixed DFT dictionary: `C = D^H diag(c) D`
//! with `D = D_v ⊗ D_h`, where `D_T` holds the first `T` columns of the unitary
//! `2T x 2T` DFT matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Result};
use crate::linalg::{dft_columns, kron, CMatrix};

pub type SpectralVector = DVector<f64>;

#[derive(Debug, Clone)]
pub struct ToeplitzDictionary {
    n_vert: usize,
    n_horiz: usize,
    /// `4N x N`
    d: CMatrix,
    gram_factor: Cholesky<f64, Dyn>,
}

impl ToeplitzDictionary {
    pub fn new(n_vert: usize, n_horiz: usize) -> Result<Self> {
        if n_vert == 0 || n_horiz == 0 {
            return invalid("dictionary dimensions must be positive");
        }
        let d = kron(&dft_columns(2 * n_vert, n_vert, 2 * n_vert), &dft_columns(2 * n_horiz, n_horiz, 2 * n_horiz));
        let inner = &d * d.adjoint();
        let atoms = d.nrows();
        let mut gram = DMatrix::from_fn(atoms, atoms, |i, j| inner[(i, j)].norm_sqr());
        // The atoms are linearly dependent, so the Gram matrix is singular.
        let ridge = 1e-10 * gram.trace();
        for i in 0..atoms {
            gram[(i, i)] += ridge;
        }
        let gram_factor = Cholesky::new(gram).expect("ridge-regularized Gram matrix is positive definite");
        Ok(ToeplitzDictionary { n_vert, n_horiz, d, gram_factor })
    }

    pub fn n_vert(&self) -> usize {
        self.n_vert
    }

    pub fn n_horiz(&self) -> usize {
        self.n_horiz
    }

    pub fn dim(&self) -> usize {
        self.n_vert * self.n_horiz
    }

    pub fn num_atoms(&self) -> usize {
        self.d.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.d
    }

    /// `D^H diag(c) D`.
    pub fn realize(&self, c: &SpectralVector) -> CMatrix {
        assert_eq!(c.len(), self.num_atoms(), "spectral vector length");
        let mut scaled = self.d.clone();
        for (i, &ci) in c.iter().enumerate() {
            scaled.row_mut(i).scale_mut(ci);
        }
        let m = self.d.adjoint() * scaled;
        crate::linalg::hermitian_part(&m)
    }

    /// Unconstrained Frobenius projection coefficients: solves
    /// `(G + ridge I) c = b` with `G[i,j] = |d_i^H d_j|^2`, `b[i] = d_i^H S d_i`.
    pub fn project(&self, scatter: &CMatrix) -> SpectralVector {
        let ds = &self.d * scatter;
        let b = DVector::from_fn(self.num_atoms(), |i, _| {
            (0..self.dim()).map(|t| ds[(i, t)] * self.d[(i, t)].conj()).sum::<num_complex::Complex64>().re
        });
        self.gram_factor.solve(&b)
    }

    /// Structured M-step: Frobenius projection onto the dictionary span
    /// followed by clipping every coefficient to `floor`.
    pub fn mstep(&self, scatter: &CMatrix, floor: f64) -> SpectralVector {
        self.project(scatter).map(|v| v.max(floor))
    }
}

/// Spectral coefficients for a weighted scatter matrix, clipped at `floor`.
pub fn toeplitz_mstep(dictionary: &ToeplitzDictionary, weighted_scatter: &CMatrix, floor: f64) -> Result<SpectralVector> {
    let n = dictionary.dim();
    if weighted_scatter.nrows() != n || weighted_scatter.ncols() != n {
        return invalid(format!("scatter must be {n}x{n}"));
    }
    Ok(dictionary.mstep(weighted_scatter, floor))
}

/// True iff `cov` is Hermitian and every entry depends only on the vertical
/// and horizontal index offsets, within `1e-8` of the largest entry.
pub fn check_structure(cov: &CMatrix, n_vert: usize, n_horiz: usize) -> bool {
    let n = n_vert * n_horiz;
    if cov.nrows() != n || cov.ncols() != n {
        return false;
    }
    let scale = cov.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-8 * scale;
    let mut reference = vec![None; (2 * n_vert - 1) * (2 * n_horiz - 1)];
    for a in 0..n {
        for b in 0..n {
            if (cov[(a, b)] - cov[(b, a)].conj()).norm() > tol {
                return false;
            }
            let dv = (a / n_horiz) as isize - (b / n_horiz) as isize + n_vert as isize - 1;
            let dh = (a % n_horiz) as isize - (b % n_horiz) as isize + n_horiz as isize - 1;
            let slot = &mut reference[dv as usize * (2 * n_horiz - 1) + dh as usize];
            match slot {
                None => *slot = Some(cov[(a, b)]),
                Some(r) => {
                    if (cov[(a, b)] - *r).norm() > tol {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, rel_frobenius};
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn realized_matrices_have_structure() {
        let dict = ToeplitzDictionary::new(2, 4).unwrap();
        let mut rng = rng_from(1);
        for _ in 0..10 {
            let c = SpectralVector::from_fn(dict.num_atoms(), |_, _| rng.random::<f64>());
            let m = dict.realize(&c);
            assert!(check_structure(&m, 2, 4));
            let (vals, _) = crate::linalg::hermitian_eigen(&m);
            assert!(vals.iter().all(|&v| v > -1e-12));
        }
    }

    #[test]
    fn identity_has_structure() {
        assert!(check_structure(&CMatrix::identity(8, 8), 2, 4));
    }

    /// Entry-equality oracle: walk every pair of positions sharing an offset.
    fn structure_oracle(m: &CMatrix, nv: usize, nh: usize) -> bool {
        let n = nv * nh;
        let tol = 1e-8 * m.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for a in 0..n {
            for b in 0..n {
                if (m[(a, b)] - m[(b, a)].conj()).norm() > tol {
                    return false;
                }
                for c in 0..n {
                    for d in 0..n {
                        let same_v = (a / nh) as isize - (b / nh) as isize == (c / nh) as isize - (d / nh) as isize;
                        let same_h = (a % nh) as isize - (b % nh) as isize == (c % nh) as isize - (d % nh) as isize;
                        if same_v && same_h && (m[(a, b)] - m[(c, d)]).norm() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    #[test]
    fn random_hermitian_fails_and_agrees_with_oracle() {
        let mut rng = rng_from(2);
        for _ in 0..5 {
            let a = CMatrix::from_fn(8, 8, |_, _| crate::rng::complex_normal(&mut rng));
            let h = crate::linalg::hermitian_part(&a);
            assert!(!check_structure(&h, 2, 4));
            assert_eq!(check_structure(&h, 2, 4), structure_oracle(&h, 2, 4));
        }
        let dict = ToeplitzDictionary::new(2, 4).unwrap();
        let m = dict.realize(&SpectralVector::from_fn(dict.num_atoms(), |i, _| 1.0 + i as f64));
        assert!(structure_oracle(&m, 2, 4));
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = CMatrix::identity(4, 4);
        m[(0, 1)] = c64(0.0, 1.0);
        assert!(!check_structure(&m, 2, 2));
    }

    #[test]
    fn zero_scatter_gives_floor() {
        let dict = ToeplitzDictionary::new(2, 2).unwrap();
        let c = toeplitz_mstep(&dict, &CMatrix::zeros(4, 4), 1e-3).unwrap();
        assert!(c.iter().all(|&v| v == 1e-3));
    }

    #[test]
    fn identity_scatter_is_reproduced() {
        let dict = ToeplitzDictionary::new(2, 2).unwrap();
        let c = toeplitz_mstep(&dict, &CMatrix::identity(4, 4), 1e-9).unwrap();
        assert!(rel_frobenius(&dict.realize(&c), &CMatrix::identity(4, 4)) < 1e-6);
    }

    #[test]
    fn representable_covariance_is_recovered() {
        let dict = ToeplitzDictionary::new(2, 4).unwrap();
        let mut rng = rng_from(5);
        let c0 = SpectralVector::from_fn(dict.num_atoms(), |_, _| 0.5 + rng.random::<f64>());
        let target = dict.realize(&c0);
        let c = toeplitz_mstep(&dict, &target, 1e-9).unwrap();
        assert!(rel_frobenius(&dict.realize(&c), &target) < 1e-6);
    }
}
