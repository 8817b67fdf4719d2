//! Fixed-trajectory Hamiltonian Monte Carlo with a diagonal mass matrix.

mod adapt;
mod init;

pub use adapt::{adapt_full_data, AdaptConfig, AdaptOutcome, DualAveraging};
pub use init::{init_fold_chains, warmup_discard};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogDensity;

/// Energy error beyond which a transition counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Frozen kernel settings shared by every fold and chain of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub inv_mass_diag: Vec<f64>,
}

impl KernelParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid(format!("step size {} is not positive", self.step_size)));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::invalid("n_leapfrog must be at least 1"));
        }
        if self.inv_mass_diag.len() != dim {
            return Err(Error::invalid(format!(
                "inverse mass has length {}, model dimension is {dim}",
                self.inv_mass_diag.len()
            )));
        }
        if self.inv_mass_diag.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("inverse mass entries must be positive and finite"));
        }
        Ok(())
    }
}

/// Position of one chain with its cached log density and gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
    pub divergences: u64,
}

impl ChainState {
    pub fn new(target: &dyn LogDensity, position: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; target.dim()];
        let logp = target.log_density_grad(&position, &mut grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFault(format!(
                "log density {logp} at the initial position"
            )));
        }
        Ok(ChainState {
            position,
            logp,
            grad,
            divergences: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    pub divergent: bool,
    /// `min(1, exp(-dH))`, zero for divergent transitions.
    pub accept_stat: f64,
}

/// End point of a leapfrog trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

/// Integrates `n_steps` leapfrog steps from `(q, p)` with gradient `grad`
/// of the log density at `q`. Returns `None` as soon as a position,
/// momentum or gradient becomes non-finite.
pub fn leapfrog(
    target: &dyn LogDensity,
    q: &[f64],
    p: &[f64],
    grad: &[f64],
    step_size: f64,
    n_steps: usize,
    inv_mass_diag: &[f64],
) -> Option<Trajectory> {
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut g = grad.to_vec();
    let mut logp = f64::NAN;
    let half = 0.5 * step_size;
    for (pi, gi) in p.iter_mut().zip(&g) {
        *pi += half * gi;
    }
    for step in 0..n_steps {
        for i in 0..q.len() {
            q[i] += step_size * inv_mass_diag[i] * p[i];
        }
        if q.iter().any(|v| !v.is_finite()) {
            return None;
        }
        logp = target.log_density_grad(&q, &mut g);
        if g.iter().any(|v| !v.is_finite()) || logp.is_nan() {
            return None;
        }
        let scale = if step + 1 == n_steps { half } else { step_size };
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += scale * gi;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    Some(Trajectory {
        position: q,
        momentum: p,
        logp,
        grad: g,
    })
}

pub(crate) fn kinetic(p: &[f64], inv_mass_diag: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass_diag).map(|(p, m)| p * p * m).sum::<f64>()
}

/// Momentum from `N(0, M)` with `M` the inverse of `inv_mass_diag`.
pub(crate) fn draw_momentum<R: Rng + ?Sized>(inv_mass_diag: &[f64], rng: &mut R) -> Vec<f64> {
    inv_mass_diag
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            z / m.sqrt()
        })
        .collect()
}

/// One Metropolis-corrected HMC transition with a fresh momentum draw.
///
/// A transition is divergent when the trajectory hits non-finite values or
/// the energy error is NaN, `-inf`, or larger than
/// [`DIVERGENCE_THRESHOLD`] in magnitude. Divergent transitions are
/// rejected and counted. A proposal with log density `-inf` (and finite
/// gradients) is an ordinary rejection.
pub fn hmc_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &dyn LogDensity,
    kernel: &KernelParams,
    rng: &mut R,
) -> StepInfo {
    let p0 = draw_momentum(&kernel.inv_mass_diag, rng);
    let h0 = -state.logp + kinetic(&p0, &kernel.inv_mass_diag);
    let traj = leapfrog(
        target,
        &state.position,
        &p0,
        &state.grad,
        kernel.step_size,
        kernel.n_leapfrog,
        &kernel.inv_mass_diag,
    );
    let divergent = StepInfo {
        accepted: false,
        divergent: true,
        accept_stat: 0.0,
    };
    let Some(traj) = traj else {
        state.divergences += 1;
        return divergent;
    };
    let h1 = -traj.logp + kinetic(&traj.momentum, &kernel.inv_mass_diag);
    let dh = h1 - h0;
    if dh == f64::INFINITY {
        return StepInfo {
            accepted: false,
            divergent: false,
            accept_stat: 0.0,
        };
    }
    if dh.is_nan() || dh.abs() > DIVERGENCE_THRESHOLD {
        state.divergences += 1;
        return divergent;
    }
    let accept_stat = (-dh).exp().min(1.0);
    let u: f64 = rng.random();
    if u < accept_stat {
        state.position = traj.position;
        state.logp = traj.logp;
        state.grad = traj.grad;
        StepInfo {
            accepted: true,
            divergent: false,
            accept_stat,
        }
    } else {
        StepInfo {
            accepted: false,
            divergent: false,
            accept_stat,
        }
    }
}

/// Simple Gaussian targets used by the sampler tests.
pub mod targets {
    use super::LogDensity;

    /// Independent Gaussian with the given standard deviations.
    pub struct DiagGaussian {
        pub sd: Vec<f64>,
    }

    impl DiagGaussian {
        pub fn standard(dim: usize) -> Self {
            DiagGaussian { sd: vec![1.0; dim] }
        }
    }

    impl LogDensity for DiagGaussian {
        fn dim(&self) -> usize {
            self.sd.len()
        }

        fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for i in 0..x.len() {
                let z = x[i] / self.sd[i];
                lp -= 0.5 * z * z;
                grad[i] = -z / self.sd[i];
            }
            lp
        }
    }

    /// Constant log density: a free particle.
    pub struct Flat {
        pub dim: usize,
    }

    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            self.dim
        }

        fn log_density_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            0.0
        }
    }
}
