//! Non-overlapping batch means for limiting-variance estimation.

use serde::{Deserialize, Serialize};

use super::logspace::log_add_exp;
use super::welford::Welford;
use crate::error::{Error, Result};

/// Batch length choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchSize {
    Fixed(usize),
    /// `floor(sqrt(N * L))` for chains of known length.
    Auto,
}

impl Default for BatchSize {
    fn default() -> Self {
        BatchSize::Fixed(50)
    }
}

impl BatchSize {
    pub fn resolve(self, n: usize, chains: usize) -> usize {
        match self {
            BatchSize::Fixed(b) => b,
            BatchSize::Auto => (((n * chains) as f64).sqrt().floor() as usize).max(1),
        }
    }
}

/// Batch means of densities, accumulated in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogBatchMeans {
    pub b: usize,
    /// Log-sum of the current, incomplete batch.
    #[serde(with = "crate::serde_ext::real")]
    pub z: f64,
    pub filled: usize,
    #[serde(with = "crate::serde_ext::real")]
    pub vx: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub vx2: f64,
    /// Completed batches.
    pub a: usize,
}

impl LogBatchMeans {
    pub fn new(b: usize) -> Self {
        assert!(b >= 1, "batch size must be positive");
        LogBatchMeans {
            b,
            z: f64::NEG_INFINITY,
            filled: 0,
            vx: f64::NEG_INFINITY,
            vx2: f64::NEG_INFINITY,
            a: 0,
        }
    }

    /// Adds one log value, committing the batch when it reaches `b` values.
    pub fn update(&mut self, log_value: f64) {
        self.z = log_add_exp(self.z, log_value);
        self.filled += 1;
        if self.filled == self.b {
            self.close_batch();
        }
    }

    /// Commits the current batch; fails unless it holds exactly `b` values.
    pub fn commit(&mut self) -> Result<()> {
        if self.filled != self.b {
            return Err(Error::invalid(format!(
                "batch holds {} of {} values",
                self.filled, self.b
            )));
        }
        self.close_batch();
        Ok(())
    }

    fn close_batch(&mut self) {
        let mean = self.z - (self.b as f64).ln();
        self.vx = log_add_exp(self.vx, mean);
        self.vx2 = log_add_exp(self.vx2, 2.0 * mean);
        self.z = f64::NEG_INFINITY;
        self.filled = 0;
        self.a += 1;
    }

    /// Values in the trailing partial batch, excluded from batch statistics.
    pub fn dropped(&self) -> usize {
        self.filled
    }
}

/// `sigma^2 / f^2` for batch means pooled over chains, centered at the
/// grand mean `exp(log_grand_mean)` of all draws.
pub fn log_batch_variance_ratio(chains: &[&LogBatchMeans], log_grand_mean: f64) -> Result<f64> {
    let a: usize = chains.iter().map(|c| c.a).sum();
    if a < 2 {
        return Err(Error::UndefinedDiagnostic(format!(
            "{a} complete batch(es); at least two are needed"
        )));
    }
    let b = chains[0].b as f64;
    let mut sq = 0.0;
    let mut lin = 0.0;
    for c in chains {
        sq += (c.vx2 - 2.0 * log_grand_mean).exp();
        lin += (c.vx - log_grand_mean).exp();
    }
    let a = a as f64;
    Ok((b / (a - 1.0) * (sq - 2.0 * lin + a)).max(0.0))
}

/// Batch means of a real-valued stream, centered at `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub b: usize,
    partial: f64,
    filled: usize,
    pub a: usize,
    /// Sum of centered batch means.
    sx: f64,
    /// Sum of squared centered batch means.
    sxx: f64,
    pub total: Welford,
}

impl BatchMeans {
    pub fn new(b: usize, c: f64) -> Self {
        assert!(b >= 1, "batch size must be positive");
        BatchMeans {
            b,
            partial: 0.0,
            filled: 0,
            a: 0,
            sx: 0.0,
            sxx: 0.0,
            total: Welford::new(c),
        }
    }

    pub fn update(&mut self, x: f64) {
        self.total.update(x);
        self.partial += x - self.total.c;
        self.filled += 1;
        if self.filled == self.b {
            let m = self.partial / self.b as f64;
            self.sx += m;
            self.sxx += m * m;
            self.a += 1;
            self.partial = 0.0;
            self.filled = 0;
        }
    }

    pub fn dropped(&self) -> usize {
        self.filled
    }
}

/// Pooled batch-means estimate of the limiting variance over chains that
/// share a centering constant.
pub fn limiting_variance(chains: &[BatchMeans]) -> Result<f64> {
    let first = chains
        .first()
        .ok_or_else(|| Error::invalid("no chains supplied"))?;
    if chains.iter().any(|c| c.total.c != first.total.c || c.b != first.b) {
        return Err(Error::invalid("chains differ in centering or batch size"));
    }
    let a: usize = chains.iter().map(|c| c.a).sum();
    if a < 2 {
        return Err(Error::UndefinedDiagnostic(format!(
            "{a} complete batch(es); at least two are needed"
        )));
    }
    let count: u64 = chains.iter().map(|c| c.total.count).sum();
    let g = chains.iter().map(|c| c.total.ax).sum::<f64>() / count as f64;
    let sx: f64 = chains.iter().map(|c| c.sx).sum();
    let sxx: f64 = chains.iter().map(|c| c.sxx).sum();
    let a = a as f64;
    let ss = sxx - 2.0 * g * sx + a * g * g;
    Ok((first.b as f64 / (a - 1.0) * ss).max(0.0))
}

/// The batch-means variance from explicit per-chain batch means:
/// `b / (La - 1) * sum (mean - grand_mean)^2`.
pub fn batch_means_variance(per_chain: &[Vec<f64>], grand_mean: f64, b: usize) -> Result<f64> {
    let total: usize = per_chain.iter().map(Vec::len).sum();
    if total < 2 {
        return Err(Error::UndefinedDiagnostic(format!(
            "{total} batch mean(s); at least two are needed"
        )));
    }
    let ss: f64 = per_chain
        .iter()
        .flatten()
        .map(|m| (m - grand_mean).powi(2))
        .sum();
    Ok(b as f64 / (total as f64 - 1.0) * ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_batches_are_raw_draws() {
        let mut bm = LogBatchMeans::new(1);
        let draws = [-1.0, 0.5, 2.0];
        for &d in &draws {
            bm.update(d);
        }
        assert_eq!(bm.a, 3);
        let lse = super::super::logspace::log_sum_exp(&draws);
        assert!((bm.vx - lse).abs() < 1e-14);
    }

    #[test]
    fn truncation_rule() {
        let mut bm = LogBatchMeans::new(50);
        for i in 0..500 {
            bm.update(-(i as f64) * 1e-3);
        }
        assert_eq!((bm.a, bm.dropped()), (10, 0));
        let mut bm = LogBatchMeans::new(50);
        for i in 0..505 {
            bm.update(-(i as f64) * 1e-3);
        }
        assert_eq!((bm.a, bm.dropped()), (10, 5));
        assert!(bm.commit().is_err());
    }

    #[test]
    fn equal_batches_have_zero_variance() {
        let means = vec![vec![2.0; 4], vec![2.0; 4]];
        assert_eq!(batch_means_variance(&means, 2.0, 10).unwrap(), 0.0);
        let mut chains = vec![LogBatchMeans::new(5), LogBatchMeans::new(5)];
        for c in &mut chains {
            for _ in 0..20 {
                c.update(0.7f64.ln());
            }
        }
        let refs: Vec<&LogBatchMeans> = chains.iter().collect();
        let r = log_batch_variance_ratio(&refs, 0.7f64.ln()).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn linear_matches_definition() {
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..40).map(|i| ((i * 7 + c * 3) % 11) as f64 * 0.3).collect())
            .collect();
        let b = 8;
        let mut chains: Vec<BatchMeans> = (0..3).map(|_| BatchMeans::new(b, 1.0)).collect();
        for (c, x) in chains.iter_mut().zip(&xs) {
            x.iter().for_each(|&v| c.update(v));
        }
        let means: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| x.chunks(b).map(|ch| ch.iter().sum::<f64>() / b as f64).collect())
            .collect();
        let g = xs.iter().flatten().sum::<f64>() / 120.0;
        let direct = batch_means_variance(&means, g, b).unwrap();
        let online = limiting_variance(&chains).unwrap();
        assert!((direct - online).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn auto_batch_size() {
        assert_eq!(BatchSize::Auto.resolve(10_000, 4), 200);
        assert_eq!(BatchSize::Fixed(50).resolve(10_000, 4), 50);
    }
}
