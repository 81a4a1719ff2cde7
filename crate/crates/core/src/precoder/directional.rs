use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::gmm::GmmModel;
use crate::linalg::{hermitian_eigen, CVector, C64};

/// Dominant eigenvector of a component's correlation matrix.
#[derive(Debug, Clone)]
pub struct Representative {
    /// Unit norm, largest-magnitude entry real and positive.
    pub vector: CVector,
    pub eigenvalue: f64,
    /// The top eigenvalue is (numerically) repeated; `vector` is one of several maximizers.
    pub tie: bool,
}

/// Dominant eigenvector of `C_k + mu_k mu_k^H` (zero-based `k`).
pub fn directional_representative(model: &GmmModel, k: usize) -> Result<Representative> {
    if k >= model.num_components() {
        return invalid(format!("component {k} out of range for K = {}", model.num_components()));
    }
    let c = model.component(k);
    let corr = c.realized() + &c.mean * c.mean.adjoint();
    let (values, vectors) = hermitian_eigen(&corr);
    let tie = values.len() > 1 && values[0] - values[1] < 1e-10;
    let mut v = vectors.column(0).into_owned();
    let pivot = v.iter().enumerate().fold(0, |best, (i, x)| if x.norm() > v[best].norm() { i } else { best });
    let phase = v[pivot].conj() / v[pivot].norm();
    v *= phase;
    v[pivot] = C64::new(v[pivot].norm(), 0.0);
    let norm = v.norm();
    v /= C64::new(norm, 0.0);
    Ok(Representative { vector: v, eigenvalue: values[0], tie })
}

/// Representatives of all components; these only depend on the model and can
/// be computed once offline.
pub fn directional_representatives(model: &GmmModel) -> Result<Vec<Representative>> {
    (0..model.num_components()).into_par_iter().map(|k| directional_representative(model, k)).collect()
}
