//! Warm-up adaptation of the step size and diagonal mass matrix on the
//! full-data posterior.
//!
//! Chains run in lock step. The step size follows dual averaging on the
//! mean acceptance statistic across chains; the inverse mass is the
//! regularized pooled variance of each slow window, which doubles in length
//! between a fast initial and a fast terminal buffer.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hmc_step, leapfrog, kinetic, ChainState, KernelParams};
use crate::accum::WelfordVec;
use crate::error::{Error, Result};
use crate::model::LogDensity;
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub chains: usize,
    pub warmup: usize,
    pub n_leapfrog: usize,
    pub target_accept: f64,
    pub init_step: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            chains: 4,
            warmup: 1000,
            n_leapfrog: 16,
            target_accept: 0.8,
            init_step: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub kernel: KernelParams,
    /// Chain states at the end of warm-up.
    pub states: Vec<ChainState>,
    pub divergences: u64,
}

/// Nesterov dual averaging of `log(step_size)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualAveraging {
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
}

impl DualAveraging {
    pub fn new(target: f64, step_size: f64) -> Self {
        let mut da = DualAveraging {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            log_eps: 0.0,
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
        };
        da.restart(step_size);
        da
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.log_eps = step_size.ln();
        self.log_eps_bar = 0.0;
        self.h_bar = 0.0;
        self.t = 0.0;
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat);
        self.log_eps = self.mu - self.t.sqrt() / self.gamma * self.h_bar;
        let w = self.t.powf(-self.kappa);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// The averaged iterate used once adaptation ends.
    pub fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Boundaries of the slow mass-matrix windows, as `(start, end)` with `end`
/// exclusive.
pub(crate) fn slow_windows(warmup: usize) -> Vec<(usize, usize)> {
    let (init, term, base) = if warmup >= 150 {
        (75, 50, 25)
    } else {
        let init = warmup * 15 / 100;
        let term = warmup / 10;
        (init, term, warmup - init - term)
    };
    let end = warmup - term;
    let mut out = Vec::new();
    if base == 0 {
        return out;
    }
    let mut start = init;
    let mut size = base;
    while start < end {
        let mut stop = start + size;
        if stop + 2 * size > end {
            stop = end;
        }
        out.push((start, stop));
        start = stop;
        size *= 2;
    }
    out
}

/// Doubles or halves the step size until a single leapfrog step crosses an
/// acceptance of 0.8.
fn reasonable_step(
    target: &dyn LogDensity,
    state: &ChainState,
    inv_mass: &[f64],
    start: f64,
    key: StreamKey,
) -> f64 {
    let accept = |eps: f64, counter: u64| -> f64 {
        let mut rng = key.rng(counter);
        let p = super::draw_momentum(inv_mass, &mut rng);
        let h0 = -state.logp + kinetic(&p, inv_mass);
        match leapfrog(target, &state.position, &p, &state.grad, eps, 1, inv_mass) {
            Some(t) => {
                let dh = -t.logp + kinetic(&t.momentum, inv_mass) - h0;
                if dh.is_nan() {
                    0.0
                } else {
                    (-dh).exp()
                }
            }
            None => 0.0,
        }
    };
    let mut eps = start;
    let up = accept(eps, 0) > 0.8;
    for counter in 1..100 {
        let next = if up { eps * 2.0 } else { eps * 0.5 };
        let a = accept(next, counter);
        eps = next;
        if up != (a > 0.8) {
            break;
        }
    }
    eps
}

/// Draws a finite-density starting point from `init`.
fn initial_state(
    target: &dyn LogDensity,
    init: &(dyn Fn(&mut dyn RngCore) -> Vec<f64> + Sync),
    key: StreamKey,
) -> Result<ChainState> {
    for attempt in 0..100 {
        let x = init(&mut key.rng(attempt));
        if let Ok(s) = ChainState::new(target, x) {
            return Ok(s);
        }
    }
    Err(Error::AdaptationFailed {
        reason: "no finite starting point in 100 prior draws".into(),
        last_position: Vec::new(),
    })
}

/// Runs warm-up and returns the frozen kernel with the final chain states.
///
/// Chain `l` starts from `init` drawn on stream `key.purpose(Prior).chain(l)`
/// and steps on `key.purpose(Adapt).chain(l)`.
pub fn adapt_full_data(
    target: &dyn LogDensity,
    init: &(dyn Fn(&mut dyn RngCore) -> Vec<f64> + Sync),
    cfg: &AdaptConfig,
    key: StreamKey,
) -> Result<AdaptOutcome> {
    let dim = target.dim();
    if dim == 0 {
        return Err(Error::invalid("model has no parameters"));
    }
    if cfg.chains == 0 {
        return Err(Error::invalid("adaptation needs at least one chain"));
    }
    if cfg.n_leapfrog == 0 {
        return Err(Error::invalid("n_leapfrog must be at least 1"));
    }
    let mut states = (0..cfg.chains)
        .into_par_iter()
        .map(|l| initial_state(target, init, key.purpose(Purpose::Prior).chain(l as u32)))
        .collect::<Result<Vec<_>>>()?;

    let search_key = |window: u32| key.purpose(Purpose::Adapt).fold(u32::MAX - window);
    let mut kernel = KernelParams {
        step_size: cfg.init_step,
        n_leapfrog: cfg.n_leapfrog,
        inv_mass_diag: vec![1.0; dim],
    };
    kernel.step_size = reasonable_step(target, &states[0], &kernel.inv_mass_diag, cfg.init_step, search_key(0));
    let mut da = DualAveraging::new(cfg.target_accept, kernel.step_size);

    let windows = slow_windows(cfg.warmup);
    let term_start = windows.last().map_or(0, |w| w.1);
    let mut window = 0;
    let mut pooled = WelfordVec::new(vec![0.0; dim]);
    let mut term_divergent = 0usize;
    let mut term_steps = 0usize;
    let mut divergences = 0u64;

    for it in 0..cfg.warmup {
        kernel.step_size = da.current();
        let infos: Vec<_> = states
            .par_iter_mut()
            .enumerate()
            .map(|(l, s)| {
                let mut rng = key.purpose(Purpose::Adapt).chain(l as u32).rng(it as u64);
                hmc_step(s, target, &kernel, &mut rng)
            })
            .collect();
        let mean_accept = infos.iter().map(|i| i.accept_stat).sum::<f64>() / infos.len() as f64;
        da.update(mean_accept);
        let n_div = infos.iter().filter(|i| i.divergent).count();
        divergences += n_div as u64;
        if it >= term_start {
            term_divergent += n_div;
            term_steps += infos.len();
        }

        if let Some(&(start, end)) = windows.get(window) {
            if it >= start && it < end {
                for s in &states {
                    pooled.update(&s.position);
                }
            }
            if it + 1 == end {
                let n = pooled.count as f64;
                let cov = pooled.covariance().map_err(|_| Error::AdaptationFailed {
                    reason: "mass-matrix window too short".into(),
                    last_position: states[0].position.clone(),
                })?;
                kernel.inv_mass_diag = (0..dim)
                    .map(|i| cov[i * dim + i] * n / (n + 5.0) + 1e-3 * 5.0 / (n + 5.0))
                    .collect();
                pooled = WelfordVec::new(states[0].position.clone());
                window += 1;
                let eps = reasonable_step(
                    target,
                    &states[0],
                    &kernel.inv_mass_diag,
                    da.current(),
                    search_key(window as u32),
                );
                da.restart(eps);
            }
        }
    }

    kernel.step_size = if cfg.warmup > 0 { da.final_step() } else { kernel.step_size };
    let fail = |reason: String| Error::AdaptationFailed {
        reason,
        last_position: states[0].position.clone(),
    };
    if !(kernel.step_size.is_finite() && kernel.step_size > 1e-10) {
        return Err(fail(format!("step size collapsed to {}", kernel.step_size)));
    }
    if term_steps > 0 && term_divergent as f64 / term_steps as f64 > 0.99 {
        return Err(fail(format!(
            "{term_divergent} of {term_steps} terminal warm-up transitions diverged"
        )));
    }
    if kernel.inv_mass_diag.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(fail("non-finite inverse mass".into()));
    }
    Ok(AdaptOutcome {
        kernel,
        states,
        divergences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmc::targets::DiagGaussian;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn windows_cover_slow_phase() {
        let w = slow_windows(1000);
        assert_eq!(w[0], (75, 100));
        assert_eq!(w.last().unwrap().1, 950);
        for pair in w.windows(2) {
            assert_eq!(pair[0].1, pair[1].0);
        }
        let short = slow_windows(100);
        assert_eq!(short[0].0, 15);
        assert_eq!(short.last().unwrap().1, 90);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            da.update(0.2);
        }
        assert!(da.current() < 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        for _ in 0..50 {
            da.update(1.0);
        }
        assert!(da.current() > 1.0);
    }

    #[test]
    fn learns_scales() {
        let sd = vec![0.1, 1.0, 10.0];
        let t = DiagGaussian { sd: sd.clone() };
        let init = |rng: &mut dyn RngCore| -> Vec<f64> {
            (0..3).map(|_| StandardNormal.sample(rng)).collect()
        };
        let cfg = AdaptConfig {
            chains: 4,
            warmup: 600,
            n_leapfrog: 10,
            ..Default::default()
        };
        let out = adapt_full_data(&t, &init, &cfg, StreamKey::new(5, Purpose::Adapt)).unwrap();
        for (m, s) in out.kernel.inv_mass_diag.iter().zip(&sd) {
            let ratio = m / (s * s);
            assert!(ratio > 0.3 && ratio < 3.0, "inv mass {m} vs variance {}", s * s);
        }
        assert!(out.kernel.step_size > 0.05);
    }

    #[test]
    fn zero_dimension_rejected() {
        let t = DiagGaussian { sd: vec![] };
        let init = |_: &mut dyn RngCore| Vec::new();
        assert!(adapt_full_data(&t, &init, &AdaptConfig::default(), StreamKey::new(0, Purpose::Adapt)).is_err());
    }
}
