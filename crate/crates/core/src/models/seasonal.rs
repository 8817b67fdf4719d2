//! Seasonal autoregression with monthly dummies.
//!
//! `y_t = sum_i rho_i y_{t - lag_i} + beta_0 + sum_{j=1}^{q} beta_j [month_t = j] + sigma * eps_t`.
//!
//! The autoregressive coefficients are sampled through `u_i` with
//! `logistic(u_i) ~ Beta(5, 5)`; [`ArTransform`] maps that value to `rho_i`.
//! Observations before `start` only serve as lagged regressors.

use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::priors::{beta_logistic_lp, logistic, NormalPrior, ScalePrior, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::folds::{FoldAssignment, FoldMasks};
use crate::model::Model;
use crate::scoring::Score;

/// How the Beta(5, 5) variable `x` maps to an autoregressive coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArTransform {
    /// `2 rho - 1 = x`, so `rho` lies in `(0.5, 1)`.
    #[default]
    Literal,
    /// `(rho + 1) / 2 = x`, so `rho` lies in `(-1, 1)`.
    Symmetric,
}

impl FromStr for ArTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ArTransform::Literal),
            "symmetric" => Ok(ArTransform::Symmetric),
            other => Err(Error::invalid(format!("unknown AR prior transform {other:?}"))),
        }
    }
}

impl ArTransform {
    /// `rho` and `d rho / d u`.
    pub fn rho(self, u: f64) -> (f64, f64) {
        let x = logistic(u);
        let dx = x * (1.0 - x);
        match self {
            ArTransform::Literal => (0.5 * (x + 1.0), 0.5 * dx),
            ArTransform::Symmetric => (2.0 * x - 1.0, 2.0 * dx),
        }
    }

    pub fn to_unconstrained(self, rho: f64) -> f64 {
        let x = match self {
            ArTransform::Literal => 2.0 * rho - 1.0,
            ArTransform::Symmetric => 0.5 * (rho + 1.0),
        };
        (x / (1.0 - x)).ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalArSpec {
    pub name: String,
    pub lags: Vec<usize>,
    /// Number of monthly dummies; month 0 is the baseline.
    pub q: usize,
    pub transform: ArTransform,
    /// First modeled time point.
    pub start: usize,
}

#[derive(Clone, Debug)]
pub struct SeasonalAr {
    spec: SeasonalArSpec,
    y: Vec<f64>,
    lagged: Vec<Vec<f64>>,
    month: Vec<usize>,
    folds: FoldAssignment,
    masks: FoldMasks,
}

const BETA_PRIOR: NormalPrior = NormalPrior { mean: 0.0, var: 1.0 };
const SIGMA_PRIOR: ScalePrior = ScalePrior::HalfNormal { var: 1.0 };
const AR_SHAPE: f64 = 5.0;

impl SeasonalAr {
    /// `series` and `months` are indexed by time; `folds` covers the
    /// `series.len() - spec.start` modeled points.
    pub fn new(spec: SeasonalArSpec, series: &[f64], months: &[usize], folds: FoldAssignment) -> Result<Self> {
        if spec.lags.is_empty() {
            return Err(Error::invalid("seasonal AR needs at least one lag"));
        }
        let max_lag = *spec.lags.iter().max().expect("non-empty lags");
        if spec.start < max_lag || spec.start >= series.len() {
            return Err(Error::invalid(format!(
                "start {} must be at least the largest lag {max_lag} and below the series length {}",
                spec.start,
                series.len()
            )));
        }
        if months.len() != series.len() {
            return Err(Error::invalid("month labels and series lengths differ"));
        }
        if spec.q > 11 {
            return Err(Error::invalid("at most 11 monthly dummies"));
        }
        let y: Vec<f64> = series[spec.start..].to_vec();
        if folds.n_obs() != y.len() {
            return Err(Error::invalid(format!(
                "fold assignment covers {} points, model has {}",
                folds.n_obs(),
                y.len()
            )));
        }
        folds.validate_training()?;
        let lagged = (spec.start..series.len())
            .map(|t| spec.lags.iter().map(|&l| series[t - l]).collect())
            .collect();
        let month = months[spec.start..].iter().map(|m| m % 12).collect();
        let masks = FoldMasks::new(&folds);
        Ok(SeasonalAr {
            spec,
            y,
            lagged,
            month,
            folds,
            masks,
        })
    }

    pub fn spec(&self) -> &SeasonalArSpec {
        &self.spec
    }

    fn p(&self) -> usize {
        self.spec.lags.len()
    }

    fn eta(&self, params: &[f64], rho: &[f64], n: usize) -> f64 {
        let p = self.p();
        let mut eta = params[p];
        let m = self.month[n];
        if m >= 1 && m <= self.spec.q {
            eta += params[p + m];
        }
        eta + rho.iter().zip(&self.lagged[n]).map(|(r, y)| r * y).sum::<f64>()
    }

    fn rhos(&self, params: &[f64]) -> (Vec<f64>, Vec<f64>) {
        params[..self.p()].iter().map(|&u| self.spec.transform.rho(u)).unzip()
    }

    fn sigma(&self, params: &[f64]) -> f64 {
        params[self.dim() - 1].exp()
    }

    fn log_joint_impl(&self, params: &[f64], fold: usize, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let p = self.p();
        let q = self.spec.q;
        let i_s = self.dim() - 1;
        let s = params[i_s];
        let inv_var = (-2.0 * s).exp();
        let (rho, drho) = self.rhos(params);
        let w = self.masks.train(fold);
        let mut lp = 0.0;
        let mut ss = 0.0;
        let mut w_sum = 0.0;
        for n in 0..self.y.len() {
            let r = self.y[n] - self.eta(params, &rho, n);
            let e = w[n] * r * inv_var;
            lp += w[n] * (-0.5 * r * r * inv_var - s - HALF_LN_2PI);
            ss += w[n] * r * r;
            w_sum += w[n];
            for i in 0..p {
                grad[i] += e * self.lagged[n][i] * drho[i];
            }
            grad[p] += e;
            let m = self.month[n];
            if m >= 1 && m <= q {
                grad[p + m] += e;
            }
        }
        grad[i_s] += ss * inv_var - w_sum;
        for i in 0..p {
            let (l, g) = beta_logistic_lp(params[i], AR_SHAPE);
            lp += l;
            grad[i] += g;
        }
        for j in 0..=q {
            let (l, g) = BETA_PRIOR.lp_grad(params[p + j]);
            lp += l;
            grad[p + j] += g;
        }
        let (l, g) = SIGMA_PRIOR.lp_grad(s);
        grad[i_s] += g;
        lp + l
    }

    fn point_lp(&self, params: &[f64], rho: &[f64], n: usize, value: f64) -> f64 {
        let s = params[self.dim() - 1];
        let r = value - self.eta(params, rho, n);
        -0.5 * r * r * (-2.0 * s).exp() - s - HALF_LN_2PI
    }
}

impl Model for SeasonalAr {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn dim(&self) -> usize {
        self.p() + self.spec.q + 2
    }

    fn param_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.spec.lags.iter().map(|l| format!("u_rho_lag{l}")).collect();
        out.extend((0..=self.spec.q).map(|j| format!("beta[{j}]")));
        out.push("log_sigma".into());
        out
    }

    fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    fn log_prior(&self, params: &[f64]) -> f64 {
        self.log_joint(params, self.sentinel()) - self.pointwise_log_lik(params).iter().sum::<f64>()
    }

    fn log_joint(&self, params: &[f64], fold: usize) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_joint_impl(params, fold, &mut grad)
    }

    fn log_joint_grad(&self, params: &[f64], fold: usize, grad: &mut [f64]) -> f64 {
        self.log_joint_impl(params, fold, grad)
    }

    fn log_pred(&self, params: &[f64], fold: usize) -> f64 {
        let (rho, _) = self.rhos(params);
        self.masks
            .test(fold)
            .iter()
            .map(|&n| self.point_lp(params, &rho, n, self.y[n]))
            .sum()
    }

    fn pointwise_log_lik(&self, params: &[f64]) -> Vec<f64> {
        let (rho, _) = self.rhos(params);
        (0..self.y.len()).map(|n| self.point_lp(params, &rho, n, self.y[n])).collect()
    }

    fn test_values(&self, fold: usize) -> Vec<f64> {
        self.masks.test(fold).iter().map(|&n| self.y[n]).collect()
    }

    fn supports(&self, _score: Score) -> bool {
        true
    }

    fn pred_derivs(&self, params: &[f64], fold: usize) -> Option<Vec<(f64, f64)>> {
        let (rho, _) = self.rhos(params);
        let inv_var = 1.0 / self.sigma(params).powi(2);
        Some(
            self.masks
                .test(fold)
                .iter()
                .map(|&n| (-(self.y[n] - self.eta(params, &rho, n)) * inv_var, -inv_var))
                .collect(),
        )
    }

    fn pred_sample(&self, params: &[f64], fold: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let (rho, _) = self.rhos(params);
        let sigma = self.sigma(params);
        Some(
            self.masks
                .test(fold)
                .iter()
                .map(|&n| {
                    let z: f64 = StandardNormal.sample(rng);
                    self.eta(params, &rho, n) + sigma * z
                })
                .collect(),
        )
    }

    fn test_log_density(&self, params: &[f64], fold: usize, y: &[f64]) -> Option<Vec<f64>> {
        let test = self.masks.test(fold);
        if y.len() != test.len() {
            return None;
        }
        let (rho, _) = self.rhos(params);
        Some(test.iter().zip(y).map(|(&n, &v)| self.point_lp(params, &rho, n, v)).collect())
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let beta = rand_distr::Beta::new(AR_SHAPE, AR_SHAPE).expect("valid beta");
        let mut out = Vec::with_capacity(self.dim());
        for _ in 0..self.p() {
            let x: f64 = beta.sample(rng);
            out.push((x / (1.0 - x)).ln());
        }
        for _ in 0..=self.spec.q {
            out.push(BETA_PRIOR.sample(rng));
        }
        out.push(SIGMA_PRIOR.sample_sigma(rng).max(1e-12).ln());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folds::make_time_block_scheme;
    use crate::model::gradient_check;
    use crate::rng::{Purpose, StreamKey};

    fn toy(transform: ArTransform) -> SeasonalAr {
        let t = 60;
        let series: Vec<f64> = (0..t).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.2 + (i as f64 * 0.5).sin()).collect();
        let months: Vec<usize> = (0..t).map(|i| i % 12).collect();
        let spec = SeasonalArSpec {
            name: "toy".into(),
            lags: vec![1, 2],
            q: 11,
            transform,
            start: 24,
        };
        let folds = make_time_block_scheme(t - 24, 6).unwrap();
        SeasonalAr::new(spec, &series, &months, folds).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for tr in [ArTransform::Literal, ArTransform::Symmetric] {
            let m = toy(tr);
            for k in 0..=m.n_folds() {
                for i in 0..20 {
                    let p = m.sample_prior(&mut StreamKey::new(i, Purpose::Prior).rng(k as u64));
                    let res = gradient_check(&m, &p, k, 1e-5, 1e-4);
                    assert!(res.is_ok(), "{tr:?} fold {k}: {res:?}");
                }
            }
        }
    }

    #[test]
    fn transforms_invert() {
        for tr in [ArTransform::Literal, ArTransform::Symmetric] {
            for rho in [0.55, 0.7, 0.95] {
                assert!((tr.rho(tr.to_unconstrained(rho)).0 - rho).abs() < 1e-12);
            }
        }
        assert!(ArTransform::Literal.rho(-30.0).0 > 0.5 - 1e-9);
        assert!(ArTransform::Symmetric.rho(-30.0).0 < -0.99);
    }

    #[test]
    fn folds_partition_likelihood() {
        let m = toy(ArTransform::Literal);
        let p = m.sample_prior(&mut StreamKey::new(3, Purpose::Prior).rng(0));
        let total: f64 = m.pointwise_log_lik(&p).iter().sum();
        let prior = m.log_prior(&p);
        for k in 0..m.n_folds() {
            let train = m.log_joint(&p, k) - prior;
            assert!((train + m.log_pred(&p, k) - total).abs() < 1e-9);
        }
    }
}
