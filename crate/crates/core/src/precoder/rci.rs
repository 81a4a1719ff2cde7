use super::{Designer, PrecoderSet};
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, hermitian_part, real, CMatrix, CVector};

/// Regularized channel inversion on conjugated representatives with
/// regularizer `J sigma_n2 / rho`. One common scale puts the total power at
/// exactly `rho`.
pub fn rci_precoders(representatives: &[CVector], sigma_n2: f64, rho: f64) -> Result<PrecoderSet> {
    let j = representatives.len();
    if j == 0 {
        return invalid("RCI needs at least one user");
    }
    let n = representatives[0].len();
    if representatives.iter().any(|h| h.len() != n) {
        return invalid("representatives must share one dimension");
    }
    if representatives.iter().any(|h| h.norm_squared() == 0.0) {
        return invalid("representatives must be nonzero");
    }
    if !(rho > 0.0) || !(sigma_n2 >= 0.0) {
        return invalid("RCI needs rho > 0 and sigma_n2 >= 0");
    }
    let regularizer = j as f64 * sigma_n2 / rho;
    // Rows are h_j^T; (H^H H + a I)^{-1} H^H = H^H (H H^H + a I)^{-1}.
    let h = CMatrix::from_fn(j, n, |r, c| representatives[r][c]);
    let mut gram = hermitian_part(&(&h * h.adjoint()));
    for i in 0..j {
        gram[(i, i)] += real(regularizer);
    }
    let mut ridge_added = false;
    let mut ridge = 1e-12 * j as f64;
    let factor = loop {
        match cholesky(&gram) {
            Ok(f) => break f,
            Err(_) if ridge < 1e6 => {
                log::warn!("RCI user Gram matrix is singular, adding ridge {ridge:.1e}");
                for i in 0..j {
                    gram[(i, i)] += real(ridge);
                }
                ridge_added = true;
                ridge *= 10.0;
            }
            Err(e) => return Err(e),
        }
    };
    let u = h.adjoint() * factor.inverse();
    let power = u.norm_squared();
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::NumericalDomain(format!("RCI precoder power {power} cannot be normalized")));
    }
    let beta = (rho / power).sqrt();
    let vectors = (0..j).map(|c| u.column(c) * real(beta)).collect();
    Ok(PrecoderSet { vectors, rho, designer: Designer::Rci { regularizer, ridge_added } })
}
