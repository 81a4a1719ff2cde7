//! Simulation laboratory for limited-feedback multi-user MIMO downlink.
//!
//! Channels from a synthetic cluster scene are compressed into `B`-bit
//! feedback either by matching an estimate against a 2D-DFT codebook or by
//! picking the most responsible component of a Gaussian mixture fitted to
//! the site. The base station then designs precoders from the feedback by
//! regularized channel inversion or by stochastic WMMSE on mixture samples,
//! and the harness compares the schemes by sum-rate.

pub mod error;
pub mod eval;
pub mod feedback;
pub mod gmm;
pub mod linalg;
pub mod precoder;
pub mod rng;
pub mod scene;

pub use error::{Error, FormatError, Result};
