//! Convergence diagnostics over score draws: R-hat, its maximum over folds,
//! effective sample size, and the block-shuffle benchmark.

mod benchmark;
mod stored;

pub use benchmark::{benchmark_verdict, shuffle_benchmark, BenchmarkDraws, Histogram, Verdict};
pub use stored::{ess_stored, rhat_stored};

use serde::{Deserialize, Serialize};

use crate::accum::CenteredSums;
use crate::error::{Error, Result};
use crate::scoring::LogsFold;

/// Within- and between-chain variances and the resulting R-hat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatParts {
    pub w: f64,
    pub b: f64,
    pub rhat: f64,
}

/// R-hat (no splitting, no rank normalization) from per-chain centered
/// sums. Chains of unequal length use their own means and variances and
/// the average length in place of `N`.
pub fn rhat_from_sums(chains: &[CenteredSums]) -> Result<RhatParts> {
    let l = chains.len();
    if l < 2 {
        return Err(Error::UndefinedDiagnostic(format!(
            "R-hat needs at least two chains, got {l}"
        )));
    }
    if let Some(c) = chains.iter().find(|c| c.n < 2) {
        return Err(Error::UndefinedDiagnostic(format!(
            "R-hat needs at least two draws per chain, got {}",
            c.n
        )));
    }
    let lf = l as f64;
    let n = chains.iter().map(|c| c.n as f64).sum::<f64>() / lf;
    let means: Vec<f64> = chains.iter().map(|c| c.sx / c.n as f64).collect();
    let w = chains
        .iter()
        .map(|c| {
            let m = c.n as f64;
            (c.sxx - c.sx * c.sx / m) / (m - 1.0)
        })
        .sum::<f64>()
        / lf;
    if !(w > 0.0) {
        return Err(Error::UndefinedDiagnostic(
            "within-chain variance is zero".into(),
        ));
    }
    let grand = means.iter().sum::<f64>() / lf;
    let b = n / (lf - 1.0) * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let rhat = (((n - 1.0) / n * w + b / n) / w).sqrt();
    Ok(RhatParts { w, b, rhat })
}

/// R-hat from block-summed `Y` accumulators of equal-length chains.
pub fn rhat_from_blocks(y_x: &[f64], y_x2: &[f64], n: u64) -> Result<RhatParts> {
    let sums: Vec<CenteredSums> = y_x
        .iter()
        .zip(y_x2)
        .map(|(&sx, &sxx)| CenteredSums { n, sx, sxx })
        .collect();
    rhat_from_sums(&sums)
}

/// Maximum over the defined values, with the number of undefined ones.
pub fn rhat_max(values: &[Option<f64>]) -> Result<(f64, usize)> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let excluded = values.len() - defined.len();
    if defined.is_empty() {
        return Err(Error::UndefinedDiagnostic(
            "no fold has a defined R-hat".into(),
        ));
    }
    Ok((defined.into_iter().fold(f64::NEG_INFINITY, f64::max), excluded))
}

/// Aggregate effective sample size over folds:
/// `LN * sum(s_k^2 / f_k^2) / sum(sigma_k^2 / f_k^2)`.
pub fn ess(folds: &[&LogsFold]) -> Result<f64> {
    let mut s2 = 0.0;
    let mut sigma2 = 0.0;
    let mut draws = None;
    for f in folds {
        match (f.naive_ratio, f.batch_ratio) {
            (Some(a), Some(b)) => {
                s2 += a;
                sigma2 += b;
            }
            _ => {
                return Err(Error::UndefinedDiagnostic(
                    "fold lacks variance estimates".into(),
                ))
            }
        }
        draws = Some(f.draws);
    }
    let draws = draws.ok_or_else(|| Error::UndefinedDiagnostic("no folds".into()))?;
    if !(sigma2 > 0.0) {
        return Err(Error::UndefinedDiagnostic("zero batch-means variance".into()));
    }
    Ok(draws as f64 * s2 / sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sums(xs: &[f64]) -> CenteredSums {
        CenteredSums {
            n: xs.len() as u64,
            sx: xs.iter().sum(),
            sxx: xs.iter().map(|x| x * x).sum(),
        }
    }

    #[test]
    fn hand_case() {
        let r = rhat_from_sums(&[sums(&[1.0, 2.0]), sums(&[3.0, 4.0])]).unwrap();
        assert!((r.w - 0.5).abs() < 1e-15);
        assert!((r.b - 4.0).abs() < 1e-15);
        assert!((r.rhat - 4.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_chains() {
        let c = sums(&[0.1, 0.4, -0.3, 0.9]);
        let r = rhat_from_sums(&[c, c, c]).unwrap();
        assert_eq!(r.b, 0.0);
        assert!((r.rhat - (3.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_chains_undefined() {
        assert!(rhat_from_sums(&[sums(&[1.0, 1.0]), sums(&[2.0, 2.0])]).is_err());
        assert!(rhat_from_sums(&[sums(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn max_skips_undefined() {
        let (m, ex) = rhat_max(&[Some(1.001), None, Some(1.02), Some(1.005)]).unwrap();
        assert_eq!(m, 1.02);
        assert_eq!(ex, 1);
        assert_eq!(rhat_max(&[Some(1.3)]).unwrap().0, 1.3);
        assert!(rhat_max(&[None, None]).is_err());
    }
}
