//! Parameter-level diagnostics from stored draws (full-data fits).

use super::{rhat_from_sums, RhatParts};
use crate::accum::{limiting_variance, BatchMeans, CenteredSums, Welford};
use crate::error::{Error, Result};

/// R-hat of one scalar from per-chain draw vectors.
pub fn rhat_stored(chains: &[&[f64]]) -> Result<RhatParts> {
    let c = pooled_mean(chains)?;
    let sums: Vec<CenteredSums> = chains
        .iter()
        .map(|xs| CenteredSums {
            n: xs.len() as u64,
            sx: xs.iter().map(|x| x - c).sum(),
            sxx: xs.iter().map(|x| (x - c).powi(2)).sum(),
        })
        .collect();
    rhat_from_sums(&sums)
}

/// Effective sample size of one scalar from per-chain draw vectors, using
/// batch means of length `b` for the limiting variance.
pub fn ess_stored(chains: &[&[f64]], b: usize) -> Result<f64> {
    let c = pooled_mean(chains)?;
    let mut pooled = Welford::new(c);
    let mut accs = Vec::with_capacity(chains.len());
    for xs in chains {
        let mut bm = BatchMeans::new(b, c);
        for &x in xs.iter() {
            bm.update(x);
            pooled.update(x);
        }
        accs.push(bm);
    }
    let s2 = pooled.variance()?;
    let sigma2 = limiting_variance(&accs)?;
    if !(sigma2 > 0.0) {
        return Err(Error::UndefinedDiagnostic("zero batch-means variance".into()));
    }
    Ok(pooled.count as f64 * s2 / sigma2)
}

fn pooled_mean(chains: &[&[f64]]) -> Result<f64> {
    let n: usize = chains.iter().map(|c| c.len()).sum();
    if n == 0 {
        return Err(Error::UndefinedDiagnostic("no draws".into()));
    }
    Ok(chains.iter().flat_map(|c| c.iter()).sum::<f64>() / n as f64)
}
