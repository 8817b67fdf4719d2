//! Run settings for full-data fits and CV runs.

use serde::{Deserialize, Serialize};

use crate::accum::BatchSize;
use crate::error::{Error, Result};
use crate::scoring::Score;

/// Settings for the full-data fit of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullDataConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub n_leapfrog: usize,
    pub target_accept: f64,
    pub init_step: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for FullDataConfig {
    fn default() -> Self {
        FullDataConfig {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            n_leapfrog: 16,
            target_accept: 0.8,
            init_step: 0.1,
            seed: 0,
            threads: default_threads(),
        }
    }
}

impl FullDataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 {
            return Err(Error::invalid("full-data fit needs at least one chain and one draw"));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::invalid("n_leapfrog must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target acceptance must lie in (0, 1)"));
        }
        if !(self.init_step > 0.0) {
            return Err(Error::invalid("initial step size must be positive"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("thread budget must be at least 1"));
        }
        Ok(())
    }
}

/// A deliberate fault injected into one chain's score draws, used to check
/// that the diagnostics notice it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CorruptionKind {
    /// Every recorded draw repeats the first one.
    Stuck,
    /// Every recorded draw is shifted by a constant.
    Shift(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub model: usize,
    pub fold: usize,
    pub chain: usize,
    pub kind: CorruptionKind,
}

/// Settings of a parallel CV run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Chains per fold.
    pub chains: usize,
    /// Sampling iterations per chain.
    pub iters: usize,
    /// Fold warm-up iterations per chain (discarded).
    pub warmup: usize,
    pub batch: BatchSize,
    /// Shuffle blocks per chain.
    pub blocks: usize,
    /// Shuffle-benchmark replicates; 0 disables the benchmark.
    pub bench_draws: usize,
    pub seed: u64,
    pub score: Score,
    pub checkpoint_every: usize,
    pub threads: usize,
    /// Quantile of the benchmark draws used for the advisory verdict.
    pub verdict_quantile: f64,
    /// Keep every log-predictive draw in the report (debugging aid; memory
    /// grows with the chain length).
    pub store_draws: bool,
    /// Give both models the same random streams, so identical models give
    /// identical draws.
    pub common_random_numbers: bool,
    pub corruption: Option<Corruption>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chains: 4,
            iters: 1000,
            warmup: 100,
            batch: BatchSize::default(),
            blocks: 5,
            bench_draws: 500,
            seed: 0,
            score: Score::LogS,
            checkpoint_every: 100,
            threads: default_threads(),
            verdict_quantile: 0.99,
            store_draws: false,
            common_random_numbers: false,
            corruption: None,
        }
    }
}

impl RunConfig {
    pub fn batch_size(&self) -> usize {
        self.batch.resolve(self.iters, self.chains)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::invalid("R-hat needs at least two chains per fold"));
        }
        if self.iters < 2 {
            return Err(Error::invalid("need at least two sampling iterations"));
        }
        let b = self.batch_size();
        if b == 0 || self.iters < b {
            return Err(Error::invalid(format!(
                "batch size {b} must lie in [1, iters = {}]",
                self.iters
            )));
        }
        if self.blocks == 0 || self.blocks > self.iters {
            return Err(Error::invalid(format!(
                "shuffle blocks {} must lie in [1, iters = {}]",
                self.blocks, self.iters
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::invalid("checkpoint interval must be positive"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("thread budget must be at least 1"));
        }
        if !(self.verdict_quantile > 0.0 && self.verdict_quantile <= 1.0) {
            return Err(Error::invalid("verdict quantile must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Iterations (1-based counts) at which progressive snapshots are taken;
    /// always ends with `iters`.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=self.iters / self.checkpoint_every)
            .map(|i| i * self.checkpoint_every)
            .collect();
        if out.last() != Some(&self.iters) {
            out.push(self.iters);
        }
        out
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_rows() {
        let cfg = RunConfig {
            iters: 1000,
            checkpoint_every: 100,
            ..RunConfig::default()
        };
        assert_eq!(cfg.checkpoints().len(), 10);
        let cfg = RunConfig {
            iters: 1000,
            checkpoint_every: 1000,
            ..RunConfig::default()
        };
        assert_eq!(cfg.checkpoints(), vec![1000]);
        let cfg = RunConfig {
            iters: 250,
            checkpoint_every: 100,
            ..RunConfig::default()
        };
        assert_eq!(cfg.checkpoints(), vec![100, 200, 250]);
    }

    #[test]
    fn rejects_bad_settings() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig { chains: 1, ..ok.clone() },
            RunConfig { iters: 10, ..ok.clone() },
            RunConfig { checkpoint_every: 0, ..ok.clone() },
            RunConfig { threads: 0, ..ok.clone() },
            RunConfig { blocks: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
