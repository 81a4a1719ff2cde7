use std::io::Write;

use super::{directional_representative, rci_precoders, Designer, PrecoderSet};
use crate::error::{invalid, Error, Result};
use crate::feedback::FeedbackReport;
use crate::gmm::{draw, GmmModel};
use crate::linalg::{hermitian_eigen, hermitian_part, real, CMatrix, CVector, C64};
use crate::rng::{rng_from, SimRng};

#[derive(Debug, Clone)]
pub struct SwmmseOptions {
    pub max_iters: usize,
    /// Step size is `t^(-step_exponent)`; 1 gives running averages, 0 keeps only the latest sample.
    pub step_exponent: f64,
    /// Bisection stops once the power is within `bisection_tol * rho` below the budget.
    pub bisection_tol: f64,
    pub seed: u64,
    pub weight_clamp: f64,
    /// Keep the precoders of every iteration (used by iteration sweeps).
    pub record_snapshots: bool,
    /// Trailing window for a smoothed sample sum-rate in the trajectory.
    pub report_window: Option<usize>,
}

impl Default for SwmmseOptions {
    fn default() -> Self {
        SwmmseOptions {
            max_iters: 300,
            step_exponent: 1.0,
            bisection_tol: 1e-9,
            seed: 0,
            weight_clamp: 1e6,
            record_snapshots: false,
            report_window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub power: f64,
    /// Sum-rate of the previous iterate on this iteration's samples.
    pub sample_sum_rate: f64,
    pub smoothed_sum_rate: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SwmmseTrace {
    pub trajectory: Vec<TrajectoryPoint>,
    /// `snapshots[t - 1]` holds the precoders after iteration `t`.
    pub snapshots: Vec<Vec<CVector>>,
}

/// Source of per-user channel samples for the stochastic loop.
pub trait ChannelSampler: Sync {
    fn num_users(&self) -> usize;
    fn dim(&self) -> usize;
    fn draw(&self, user: usize, rng: &mut SimRng) -> CVector;
}

/// Draws each user's samples from the mixture component it reported.
pub struct GmmSampler<'a> {
    model: &'a GmmModel,
    components: Vec<usize>,
}

impl<'a> GmmSampler<'a> {
    pub fn new(model: &'a GmmModel, components: Vec<usize>) -> Result<Self> {
        if components.is_empty() {
            return invalid("sampler needs at least one user");
        }
        if let Some(&k) = components.iter().find(|&&k| k >= model.num_components()) {
            return invalid(format!("component {k} out of range for K = {}", model.num_components()));
        }
        Ok(GmmSampler { model, components })
    }
}

impl ChannelSampler for GmmSampler<'_> {
    fn num_users(&self) -> usize {
        self.components.len()
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn draw(&self, user: usize, rng: &mut SimRng) -> CVector {
        draw(self.model.component(self.components[user]), rng)
    }
}

/// Stochastic WMMSE fed with samples of the reported components, initialized
/// with RCI on the directional representatives.
pub fn swmmse_precoders(
    model: &GmmModel,
    reports: &[FeedbackReport],
    sigma_n2: f64,
    rho: f64,
    opts: &SwmmseOptions,
) -> Result<PrecoderSet> {
    let components: Vec<usize> = reports.iter().map(|r| r.index).collect();
    let sampler = GmmSampler::new(model, components.clone())?;
    let reps = components
        .iter()
        .map(|&k| directional_representative(model, k).map(|r| r.vector))
        .collect::<Result<Vec<_>>>()?;
    let init = rci_precoders(&reps, sigma_n2, rho)?.vectors;
    swmmse_with_sampler(&sampler, init, sigma_n2, rho, opts)
}

/// The stochastic WMMSE loop for an arbitrary sampler and starting point.
pub fn swmmse_with_sampler(
    sampler: &dyn ChannelSampler,
    init: Vec<CVector>,
    sigma_n2: f64,
    rho: f64,
    opts: &SwmmseOptions,
) -> Result<PrecoderSet> {
    let j = sampler.num_users();
    let n = sampler.dim();
    if opts.max_iters == 0 {
        return invalid("SWMMSE needs max_iters >= 1");
    }
    if init.len() != j || init.iter().any(|v| v.len() != n) {
        return invalid(format!("initial precoders must be {j} vectors of length {n}"));
    }
    if !(rho > 0.0) || !(sigma_n2 >= 0.0) {
        return invalid("SWMMSE needs rho > 0 and sigma_n2 >= 0");
    }
    let mut rng = rng_from(opts.seed);
    let mut v = init;
    let mut a = CMatrix::zeros(n, n);
    let mut b = CMatrix::zeros(n, j);
    let mut trace = SwmmseTrace::default();
    let mut recent_rates = std::collections::VecDeque::new();

    for t in 1..=opts.max_iters {
        let samples: Vec<CVector> = (0..j).map(|u| sampler.draw(u, &mut rng)).collect();
        let gamma = (t as f64).powf(-opts.step_exponent);
        let mut a_new = CMatrix::zeros(n, n);
        let mut b_new = CMatrix::zeros(n, j);
        let mut rate = 0.0;
        for (user, h) in samples.iter().enumerate() {
            let gains: Vec<C64> = v.iter().map(|vm| h.dot(vm)).collect();
            let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() + sigma_n2;
            let signal = gains[user].norm_sqr();
            let receiver = if total > 0.0 { gains[user].conj() / total } else { C64::new(0.0, 0.0) };
            let error = 1.0 - (receiver * gains[user]).re;
            let weight = if error > 0.0 { (1.0 / error).clamp(1.0, opts.weight_clamp) } else { opts.weight_clamp };
            let interference = total - signal;
            if interference > 0.0 {
                rate += (signal / interference).ln_1p() / std::f64::consts::LN_2;
            }
            let hc = h.conjugate();
            a_new.gerc(real(weight * receiver.norm_sqr()), &hc, &hc, C64::new(1.0, 0.0));
            b_new.column_mut(user).axpy(receiver.conj() * weight, &hc, C64::new(0.0, 0.0));
        }
        a = a * real(1.0 - gamma) + a_new * real(gamma);
        b = b * real(1.0 - gamma) + b_new * real(gamma);
        let (solution, _) = power_constrained_solve(&a, &b, rho, opts.bisection_tol)?;
        if solution.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::NumericalDomain(format!(
                "SWMMSE diverged at iteration {t}: non-finite precoder (|A| = {:.3e}, |B| = {:.3e})",
                a.norm(),
                b.norm()
            )));
        }
        v = (0..j).map(|c| solution.column(c).into_owned()).collect();
        let power = solution.norm_squared();
        let smoothed = opts.report_window.filter(|&w| w > 0).map(|w| {
            recent_rates.push_back(rate);
            if recent_rates.len() > w {
                recent_rates.pop_front();
            }
            recent_rates.iter().sum::<f64>() / recent_rates.len() as f64
        });
        trace.trajectory.push(TrajectoryPoint { iteration: t, power, sample_sum_rate: rate, smoothed_sum_rate: smoothed });
        if opts.record_snapshots {
            trace.snapshots.push(v.clone());
        }
    }
    Ok(PrecoderSet { vectors: v, rho, designer: Designer::Swmmse(trace) })
}

/// Solves `V = (A + lambda I)^+ B` with the smallest `lambda >= 0` such that
/// `||V||_F^2 <= rho`. Returns the solution and `lambda`.
pub fn power_constrained_solve(a: &CMatrix, b: &CMatrix, rho: f64, tol: f64) -> Result<(CMatrix, f64)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return invalid("power-constrained solve: dimension mismatch");
    }
    let (values, vectors) = hermitian_eigen(&hermitian_part(a));
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = 1e-12 * top.max(f64::MIN_POSITIVE);
    let projected = vectors.adjoint() * b;
    let row_energy: Vec<f64> = (0..n).map(|i| projected.row(i).norm_squared()).collect();
    let eig: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
    let power = |lambda: f64| -> f64 {
        (0..n)
            .filter(|&i| lambda > 0.0 || eig[i] > cutoff)
            .map(|i| row_energy[i] / (eig[i] + lambda).powi(2))
            .sum()
    };
    let lambda = if power(0.0) <= rho {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = (b.norm() / rho.sqrt()).max(f64::MIN_POSITIVE);
        while power(hi) > rho {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::NumericalDomain("power bisection failed to bracket".into()));
            }
        }
        for _ in 0..200 {
            let p = power(hi);
            if p >= rho * (1.0 - tol) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if power(mid) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let scaled = CMatrix::from_fn(n, b.ncols(), |i, c| {
        let d = eig[i] + lambda;
        if lambda == 0.0 && eig[i] <= cutoff {
            C64::new(0.0, 0.0)
        } else {
            projected[(i, c)] / d
        }
    });
    Ok((&vectors * scaled, lambda))
}

/// Writes `iteration,sum_rate,power` rows.
pub fn write_trajectory_csv<W: Write>(trace: &SwmmseTrace, mut out: W) -> Result<()> {
    writeln!(out, "iteration,sum_rate,power")?;
    for p in &trace.trajectory {
        writeln!(out, "{},{:.16e},{:.16e}", p.iteration, p.sample_sum_rate, p.power)?;
    }
    Ok(())
}
