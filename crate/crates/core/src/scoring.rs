//! Scoring rules over accumulated statistics, Monte Carlo error of the CV
//! objective, and the normal approximation to the selection probability.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accum::{log_batch_variance_ratio, log_sum_exp, HsSums, LogBatchMeans, LogSum, WelfordVec};
use crate::error::{Error, Result};

/// Scoring rule used for the CV objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    /// Log predictive density.
    #[default]
    LogS,
    /// Hyvärinen score.
    Hs,
    /// Dawid–Sebastiani score.
    Dss,
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Score::LogS => "logs",
            Score::Hs => "hs",
            Score::Dss => "dss",
        })
    }
}

impl FromStr for Score {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logs" | "log" => Ok(Score::LogS),
            "hs" => Ok(Score::Hs),
            "dss" => Ok(Score::Dss),
            other => Err(Error::invalid(format!("unknown score {other:?}"))),
        }
    }
}

/// Log-score statistics of one fold, pooled over its chains.
#[derive(Clone, Debug, PartialEq)]
pub struct LogsFold {
    /// `log` of the mean predictive density; this is the fold's LogS.
    pub log_f_hat: f64,
    pub draws: u64,
    /// Naive sample variance of the density draws divided by `f^2`.
    pub naive_ratio: Option<f64>,
    /// Batch-means limiting variance divided by `f^2`.
    pub batch_ratio: Option<f64>,
}

impl LogsFold {
    pub fn is_fault(&self) -> bool {
        self.log_f_hat == f64::NEG_INFINITY || self.log_f_hat.is_nan()
    }

    /// Per-fold effective sample size `LN * s^2 / sigma^2`.
    pub fn ess(&self) -> Option<f64> {
        match (self.naive_ratio, self.batch_ratio) {
            (Some(s2), Some(v)) if v > 0.0 => Some(self.draws as f64 * s2 / v),
            _ => None,
        }
    }
}

/// The fold's log score `log(sum exp U) - log(LN)` with its variance ratios.
pub fn logs_fold_score(sums: &[&LogSum], batches: &[&LogBatchMeans]) -> LogsFold {
    let ux: Vec<f64> = sums.iter().map(|s| s.ux).collect();
    let draws: u64 = sums.iter().map(|s| s.count).sum();
    let log_f_hat = log_sum_exp(&ux) - (draws as f64).ln();
    if !log_f_hat.is_finite() {
        return LogsFold {
            log_f_hat,
            draws,
            naive_ratio: None,
            batch_ratio: None,
        };
    }
    let naive_ratio = (draws >= 2).then(|| {
        let n = draws as f64;
        let sq: f64 = sums.iter().map(|s| (s.ux2 - 2.0 * log_f_hat).exp()).sum();
        ((sq - n) / (n - 1.0)).max(0.0)
    });
    let batch_ratio = log_batch_variance_ratio(batches, log_f_hat).ok();
    LogsFold {
        log_f_hat,
        draws,
        naive_ratio,
        batch_ratio,
    }
}

/// Hyvärinen score of one fold from pooled per-observation sums:
/// `sum_i 2 E[d2 + d1^2] - E[d1]^2`. Smaller is better in this raw form.
pub fn hs_fold_score(sums: &HsSums) -> f64 {
    let (m1, m2) = sums.means();
    m1.iter().zip(&m2).map(|(a, b)| 2.0 * a - b * b).sum()
}

/// Dawid–Sebastiani score of one fold and whether a ridge was needed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DssFold {
    pub value: f64,
    pub ridged: bool,
}

/// `-log|S| - (y - m)' S^-1 (y - m)` from the pooled predictive draws.
pub fn dss_fold_score(draws: &WelfordVec, y: &[f64]) -> Result<DssFold> {
    let d = draws.dim();
    if y.len() != d {
        return Err(Error::invalid(format!(
            "{} observed values for a {d}-dimensional predictive",
            y.len()
        )));
    }
    if d == 0 {
        return Ok(DssFold {
            value: 0.0,
            ridged: false,
        });
    }
    if draws.count < d as u64 + 1 {
        return Err(Error::invalid(format!(
            "{} predictive draws cannot estimate a {d}x{d} covariance",
            draws.count
        )));
    }
    let mean = draws.mean();
    let cov = DMatrix::from_row_slice(d, d, &draws.covariance()?);
    let resid = DVector::from_iterator(d, y.iter().zip(&mean).map(|(a, b)| a - b));
    let (chol, ridged) = match cov.clone().cholesky() {
        Some(c) => (c, false),
        None => {
            let ridge = 1e-8 * cov.trace() / d as f64;
            let bumped = &cov + DMatrix::identity(d, d) * ridge;
            match (ridge > 0.0).then(|| bumped.cholesky()).flatten() {
                Some(c) => (c, true),
                None => {
                    return Err(Error::NumericFault(
                        "predictive covariance is singular".into(),
                    ))
                }
            }
        }
    };
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = resid.dot(&chol.solve(&resid));
    Ok(DssFold {
        value: -log_det - quad,
        ridged,
    })
}

/// Monte Carlo standard error of a sum of log scores via the delta method:
/// `sqrt(sum(sigma_k^2 / f_k^2) / LN)`. Any undefined or infinite ratio
/// makes the result `+inf`.
pub fn delta_method_mcse<I>(ratios: I, l: usize, n: usize) -> f64
where
    I: IntoIterator<Item = Option<f64>>,
{
    let mut total = 0.0;
    for r in ratios {
        match r {
            Some(v) if v.is_finite() => total += v,
            _ => return f64::INFINITY,
        }
    }
    (total / (l * n) as f64).sqrt()
}

/// Sample variance of the per-fold contributions about their mean.
pub fn epistemic_variance(contribs: &[f64]) -> Result<f64> {
    let k = contribs.len();
    if k < 2 {
        return Err(Error::invalid(format!(
            "epistemic variance needs at least two folds, got {k}"
        )));
    }
    let mean = contribs.iter().sum::<f64>() / k as f64;
    Ok(contribs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi(delta / sqrt(K var))`, with the degenerate zero-variance cases
/// resolved by the sign of `delta`.
pub fn selection_probability(delta_hat: f64, fold_deltas: &[f64]) -> Result<f64> {
    let var = epistemic_variance(fold_deltas)?;
    let k = fold_deltas.len() as f64;
    if var == 0.0 {
        return Ok(if delta_hat > 0.0 {
            1.0
        } else if delta_hat < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    Ok(normal_cdf(delta_hat / (k * var).sqrt()))
}

/// Pairwise comparison of two models over common folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    #[serde(with = "crate::serde_ext::real")]
    pub delta_hat: f64,
    /// Folds contributing to the comparison.
    pub folds: Vec<usize>,
    #[serde(with = "crate::serde_ext::real_vec")]
    pub fold_deltas: Vec<f64>,
    #[serde(with = "crate::serde_ext::real")]
    pub epistemic_var: f64,
    /// `sqrt(K * epistemic_var)`, the standard error of `delta_hat`.
    #[serde(with = "crate::serde_ext::real")]
    pub epistemic_se: f64,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub mcse: Option<f64>,
    #[serde(with = "crate::serde_ext::real")]
    pub prob_a_better: f64,
}

/// Builds the comparison from per-fold scores of A and B (positively
/// oriented), summing differences in fold order.
pub fn compare(folds: Vec<usize>, a: &[f64], b: &[f64], mcse: Option<f64>) -> Result<ComparisonResult> {
    let fold_deltas: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let delta_hat: f64 = fold_deltas.iter().sum();
    let epistemic_var = epistemic_variance(&fold_deltas)?;
    let prob_a_better = selection_probability(delta_hat, &fold_deltas)?;
    Ok(ComparisonResult {
        delta_hat,
        epistemic_se: (fold_deltas.len() as f64 * epistemic_var).sqrt(),
        folds,
        fold_deltas,
        epistemic_var,
        mcse,
        prob_a_better,
    })
}
