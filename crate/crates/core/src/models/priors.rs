//! Prior densities on the unconstrained scale.

use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log N(x | mean, var)` and its derivative in `x`.
pub fn normal_lp(x: f64, mean: f64, var: f64) -> (f64, f64) {
    let r = x - mean;
    (-0.5 * r * r / var - 0.5 * (2.0 * PI * var).ln(), -r / var)
}

/// A normal prior given by mean and variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub var: f64,
}

impl NormalPrior {
    pub fn new(mean: f64, var: f64) -> Self {
        NormalPrior { mean, var }
    }

    pub fn lp_grad(&self, x: f64) -> (f64, f64) {
        normal_lp(x, self.mean, self.var)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        Normal::new(self.mean, self.var.sqrt()).expect("positive variance").sample(rng)
    }
}

/// Prior on a scale `sigma`, evaluated on `s = log(sigma)` with the
/// Jacobian of the transform included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalePrior {
    /// `sigma ~ N+(0, var)`.
    HalfNormal { var: f64 },
    /// `sigma ~ Gamma(shape, rate)`.
    GammaSd { shape: f64, rate: f64 },
    /// `sigma^2 ~ Gamma(shape, rate)`.
    GammaVar { shape: f64, rate: f64 },
}

impl ScalePrior {
    /// Log density of `s = log(sigma)` and its derivative.
    pub fn lp_grad(&self, s: f64) -> (f64, f64) {
        match *self {
            ScalePrior::HalfNormal { var } => {
                let sig2 = (2.0 * s).exp();
                (
                    std::f64::consts::LN_2 - 0.5 * (2.0 * PI * var).ln() - sig2 / (2.0 * var) + s,
                    1.0 - sig2 / var,
                )
            }
            ScalePrior::GammaSd { shape, rate } => {
                let sig = s.exp();
                (
                    shape * rate.ln() - libm::lgamma(shape) + shape * s - rate * sig,
                    shape - rate * sig,
                )
            }
            ScalePrior::GammaVar { shape, rate } => {
                let var = (2.0 * s).exp();
                (
                    shape * rate.ln() - libm::lgamma(shape) + std::f64::consts::LN_2 + 2.0 * shape * s - rate * var,
                    2.0 * shape - 2.0 * rate * var,
                )
            }
        }
    }

    /// A prior draw of `sigma`.
    pub fn sample_sigma(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            ScalePrior::HalfNormal { var } => {
                let z: f64 = Normal::new(0.0, var.sqrt()).expect("positive variance").sample(rng);
                z.abs()
            }
            ScalePrior::GammaSd { shape, rate } => Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng),
            ScalePrior::GammaVar { shape, rate } => {
                let v: f64 = Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng);
                v.sqrt()
            }
        }
    }
}

/// Log density of `u` when `logistic(u) ~ Beta(a, a)`, Jacobian included,
/// and its derivative.
pub fn beta_logistic_lp(u: f64, a: f64) -> (f64, f64) {
    let x = logistic(u);
    let ln_beta = 2.0 * libm::lgamma(a) - libm::lgamma(2.0 * a);
    (a * log_logistic(u) + a * log_logistic(-u) - ln_beta, a - 2.0 * a * x)
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(logistic(u))` without overflow.
fn log_logistic(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn scale_priors_normalize() {
        for p in [
            ScalePrior::HalfNormal { var: 10.0 },
            ScalePrior::GammaSd { shape: 25.0, rate: 2.0 },
            ScalePrior::GammaSd { shape: 1.0, rate: 2.0 },
            ScalePrior::GammaVar { shape: 6.0, rate: 9.0 },
        ] {
            let mass = integrate(|s| p.lp_grad(s).0.exp(), -30.0, 8.0);
            assert!((mass - 1.0).abs() < 1e-6, "{p:?} integrates to {mass}");
        }
    }

    #[test]
    fn scale_prior_gradients() {
        for p in [
            ScalePrior::HalfNormal { var: 1.0 },
            ScalePrior::GammaSd { shape: 5.0, rate: 10.0 },
            ScalePrior::GammaVar { shape: 10.0, rate: 10.0 },
        ] {
            for s in [-2.0, -0.3, 0.0, 0.7, 1.5] {
                let h = 1e-6;
                let fd = (p.lp_grad(s + h).0 - p.lp_grad(s - h).0) / (2.0 * h);
                assert!((fd - p.lp_grad(s).1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_sigma_jacobian_adds_one() {
        // For a flat density in sigma the log-sigma density gains exactly +s,
        // so the half-normal gradient at sigma -> 0 tends to 1.
        let p = ScalePrior::HalfNormal { var: 1.0 };
        assert!((p.lp_grad(-20.0).1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_logistic_normalizes() {
        let mass = integrate(|u| beta_logistic_lp(u, 5.0).0.exp(), -40.0, 40.0);
        assert!((mass - 1.0).abs() < 1e-8);
        let h = 1e-6;
        for u in [-3.0, 0.0, 0.4, 2.5] {
            let fd = (beta_logistic_lp(u + h, 5.0).0 - beta_logistic_lp(u - h, 5.0).0) / (2.0 * h);
            assert!((fd - beta_logistic_lp(u, 5.0).1).abs() < 1e-6);
        }
    }
}
