//! Downlink precoder design from feedback: directional representatives with
//! regularized channel inversion, or stochastic WMMSE on mixture samples.
//!
//! Rates are computed with `h^T v`, so every designer works with conjugated
//! channel directions: a representative equal to the channel direction then
//! yields the full beamforming gain.

mod directional;
mod rci;
mod swmmse;

pub use directional::{directional_representative, directional_representatives, Representative};
pub use rci::rci_precoders;
pub use swmmse::{
    power_constrained_solve, swmmse_precoders, swmmse_with_sampler, write_trajectory_csv, ChannelSampler, GmmSampler,
    SwmmseOptions, SwmmseTrace, TrajectoryPoint,
};

use crate::linalg::CVector;

#[derive(Debug, Clone)]
pub enum Designer {
    Rci {
        regularizer: f64,
        /// Set when a ridge had to be added to invert the user Gram matrix.
        ridge_added: bool,
    },
    Swmmse(SwmmseTrace),
}

/// One precoding vector per user, jointly within the power budget.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub vectors: Vec<CVector>,
    pub rho: f64,
    pub designer: Designer,
}

impl PrecoderSet {
    pub fn total_power(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm_squared()).sum()
    }
}
