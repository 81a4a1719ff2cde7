//! Pilot matrices, DFT codebooks, channel estimators and the per-user
//! feedback index, either by codebook matching or by GMM responsibilities.

mod codebook;
mod estimators;
mod pilots;

pub use codebook::{beam_allocation, build_dft_codebook, select_codebook_index, Codebook};
pub use estimators::{
    estimate_gmm, estimate_lmmse, estimate_omp, omp_recover, oversampled_dictionary, sample_moments, GmmEstimator,
    LmmseEstimator, OmpEstimator, OmpOutcome, OmpStop,
};
pub use pilots::{build_pilot_matrix, observe, pilot_rows, PilotSetup};

use std::fmt;

use crate::error::Result;
use crate::gmm::{argmax, log_scores, Constraint, GmmModel, ObservationGmm};
use crate::linalg::CVector;

/// Channel estimate a codebook-based terminal feeds into the codebook search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// The true channel.
    Perfect,
    Gmm,
    Tgmm,
    Lmmse,
    Omp,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Perfect => "perfect",
            Estimator::Gmm => "gmm",
            Estimator::Tgmm => "tgmm",
            Estimator::Lmmse => "lmmse",
            Estimator::Omp => "omp",
        }
    }
}

/// Which scheme produced a feedback index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeTag {
    Dft(Estimator),
    GmmObs,
    GmmPerfect,
    TgmmObs,
    TgmmPerfect,
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeTag::Dft(e) => write!(f, "dft+{}", e.name()),
            SchemeTag::GmmObs => f.write_str("gmm-obs"),
            SchemeTag::GmmPerfect => f.write_str("gmm-perfect"),
            SchemeTag::TgmmObs => f.write_str("tgmm-obs"),
            SchemeTag::TgmmPerfect => f.write_str("tgmm-perfect"),
        }
    }
}

/// One user's feedback. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackReport {
    pub user: usize,
    pub index: usize,
    pub scheme: SchemeTag,
    /// Set when the input carried no information (e.g. an all-zero estimate).
    pub degenerate: bool,
}

impl FeedbackReport {
    pub fn for_user(mut self, user: usize) -> Self {
        self.user = user;
        self
    }

    pub fn tagged(mut self, scheme: SchemeTag) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Component with the highest responsibility for the observation `y`.
pub fn gmm_feedback_index(obs_model: &ObservationGmm, y: &CVector) -> Result<FeedbackReport> {
    // The normalizer is common to all components, so the raw scores suffice.
    let scores = log_scores(obs_model, y)?;
    let scheme = match obs_model.constraint() {
        Constraint::Full => SchemeTag::GmmObs,
        Constraint::Toeplitz => SchemeTag::TgmmObs,
    };
    Ok(FeedbackReport { user: 0, index: argmax(&scores), scheme, degenerate: false })
}

/// Component with the highest responsibility for the true channel `h`.
pub fn gmm_feedback_index_perfect(model: &GmmModel, h: &CVector) -> Result<FeedbackReport> {
    let scores = log_scores(model, h)?;
    let scheme = match model.constraint() {
        Constraint::Full => SchemeTag::GmmPerfect,
        Constraint::Toeplitz => SchemeTag::TgmmPerfect,
    };
    Ok(FeedbackReport { user: 0, index: argmax(&scores), scheme, degenerate: false })
}
