//! Dense complex linear-algebra helpers shared by the estimators, the mixture
//! model and the precoders.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Unitary `n x n` DFT matrix, `F[m, t] = exp(-i 2 pi m t / n) / sqrt(n)`.
pub fn dft_unitary(n: usize) -> CMatrix {
    dft_columns(n, n, n)
}

/// `rows x cols` block of a DFT matrix over `period` frequency bins, scaled by
/// `1/sqrt(rows)` so every column has unit norm.
pub fn dft_columns(rows: usize, cols: usize, period: usize) -> CMatrix {
    let scale = 1.0 / (rows as f64).sqrt();
    CMatrix::from_fn(rows, cols, |t, m| {
        let phase = -2.0 * PI * ((t * m) % period) as f64 / period as f64;
        C64::from_polar(scale, phase)
    })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * real(0.5)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order; column `i` of the returned matrix pairs with value `i`.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Rebuilds `U diag(max(lambda, floor)) U^H`.
pub fn floor_eigenvalues(m: &CMatrix, floor: f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    from_eigen(&clipped, &vectors)
}

pub fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    hermitian_part(&(scaled * vectors.adjoint()))
}

/// Square root of a PSD matrix with negative eigenvalues clipped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors;
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    scaled
}

/// Cholesky factorization that rejects indefinite input. nalgebra takes
/// complex square roots of negative pivots, so the pivots are checked here.
pub fn cholesky(m: &CMatrix) -> Result<Cholesky<C64, Dyn>> {
    try_cholesky(hermitian_part(m)).ok_or_else(|| Error::NumericalDomain("matrix is not positive definite".into()))
}

fn try_cholesky(m: CMatrix) -> Option<Cholesky<C64, Dyn>> {
    // Pivots at roundoff level relative to the largest diagonal entry mean
    // the matrix is numerically singular.
    let largest = m.diagonal().iter().fold(0.0f64, |acc, d| acc.max(d.re));
    let min_pivot = 64.0 * f64::EPSILON * largest;
    let chol = Cholesky::new(m)?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re.is_finite() && d.re > 0.0 && d.re * d.re > min_pivot && d.im.abs() <= 1e-8 * d.re);
    ok.then_some(chol)
}

/// `log det` from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<C64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// Solves the Hermitian system `(m + ridge I) x = rhs`. When the factorization
/// fails the ridge restarts at `1e-10` of the mean diagonal and grows tenfold
/// until it succeeds. Returns the ridge actually used.
pub fn solve_hermitian(m: &CMatrix, rhs: &CMatrix, ridge: f64) -> (CMatrix, f64) {
    let n = m.nrows();
    let scale = (m.trace().re / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut delta = ridge;
    loop {
        let mut a = hermitian_part(m);
        for i in 0..n {
            a[(i, i)] += delta;
        }
        if let Some(ch) = try_cholesky(a) {
            return (ch.solve(rhs), delta);
        }
        delta = if delta == 0.0 { 1e-10 * scale } else { delta * 10.0 };
    }
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMatrix {
    m.map(real)
}

/// Frobenius norm of `a - b` relative to the norm of `b`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / denom
    }
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}
