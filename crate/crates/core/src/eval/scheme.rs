use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::feedback::{Estimator, SchemeTag};
use crate::gmm::Constraint;

/// How the transmitter turns feedback into precoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecoderKind {
    Rci,
    Swmmse,
}

impl PrecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrecoderKind::Rci => "rci",
            PrecoderKind::Swmmse => "swmmse",
        }
    }
}

impl FromStr for PrecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rci" => Ok(PrecoderKind::Rci),
            "swmmse" => Ok(PrecoderKind::Swmmse),
            other => Err(Error::Config(format!("unknown precoder {other:?} (expected rci or swmmse)"))),
        }
    }
}

/// A feedback scheme paired with a precoder designer.
///
/// Written as e.g. `gmm-obs`, `gmm-obs:swmmse` or `dft-omp`. Mixture schemes
/// without a designer suffix take the configured default; codebook schemes
/// always use RCI on the codebook entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scheme {
    pub tag: SchemeTag,
    pub precoder: PrecoderKind,
}

impl Scheme {
    pub fn parse(text: &str, default_precoder: PrecoderKind) -> Result<Self> {
        let (base, designer) = match text.split_once(':') {
            Some((b, d)) => (b, Some(d.parse::<PrecoderKind>()?)),
            None => (text, None),
        };
        let tag = match base {
            "gmm-obs" => SchemeTag::GmmObs,
            "gmm-perfect" => SchemeTag::GmmPerfect,
            "tgmm-obs" => SchemeTag::TgmmObs,
            "tgmm-perfect" => SchemeTag::TgmmPerfect,
            "dft-perfect" => SchemeTag::Dft(Estimator::Perfect),
            "dft-gmm" => SchemeTag::Dft(Estimator::Gmm),
            "dft-tgmm" => SchemeTag::Dft(Estimator::Tgmm),
            "dft-lmmse" => SchemeTag::Dft(Estimator::Lmmse),
            "dft-omp" => SchemeTag::Dft(Estimator::Omp),
            other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
        };
        let precoder = match (tag, designer) {
            (SchemeTag::Dft(_), Some(PrecoderKind::Swmmse)) => {
                return Err(Error::Config(format!("codebook scheme {base:?} only supports rci")))
            }
            (SchemeTag::Dft(_), _) => PrecoderKind::Rci,
            (_, Some(d)) => d,
            (_, None) => default_precoder,
        };
        Ok(Scheme { tag, precoder })
    }

    /// Mixture model the scheme depends on, if any.
    pub fn required_model(&self) -> Option<Constraint> {
        match self.tag {
            SchemeTag::GmmObs | SchemeTag::GmmPerfect | SchemeTag::Dft(Estimator::Gmm) => Some(Constraint::Full),
            SchemeTag::TgmmObs | SchemeTag::TgmmPerfect | SchemeTag::Dft(Estimator::Tgmm) => Some(Constraint::Toeplitz),
            SchemeTag::Dft(_) => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tag {
            SchemeTag::Dft(e) => write!(f, "dft-{}", e.name()),
            tag => write!(f, "{tag}:{}", self.precoder.name()),
        }
    }
}
