//! Block-shuffle benchmark for interpreting the maximum R-hat.
//!
//! Each replicate rebuilds every chain of every fold from blocks drawn
//! with replacement from that fold's own chains, then takes R-hat per fold
//! and the maximum across folds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rhat_from_sums;
use crate::accum::{CenteredSums, ShuffleBlocks};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDraws {
    /// Maximum R-hat over folds, one per replicate.
    #[serde(with = "crate::serde_ext::real_vec")]
    pub replicate_max: Vec<f64>,
    /// R-hat per fold (outer) and replicate (inner); NaN where undefined.
    #[serde(skip)]
    pub per_fold: Vec<Vec<f64>>,
}

/// Runs `r` shuffle replicates. `folds[f]` holds the chains of one
/// (model, fold) pair; replicate `i` draws from `key.rng(i)`.
pub fn shuffle_benchmark(folds: &[Vec<&ShuffleBlocks>], r: usize, key: StreamKey) -> BenchmarkDraws {
    let rows: Vec<Vec<f64>> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut rng = key.rng(rep as u64);
            folds
                .iter()
                .map(|chains| shuffled_rhat(chains, &mut rng))
                .collect()
        })
        .collect();
    let replicate_max = rows
        .iter()
        .map(|row| {
            row.iter()
                .copied()
                .filter(|v| !v.is_nan())
                .fold(f64::NAN, f64::max)
        })
        .collect();
    let per_fold = (0..folds.len())
        .map(|f| rows.iter().map(|row| row[f]).collect())
        .collect();
    BenchmarkDraws {
        replicate_max,
        per_fold,
    }
}

fn shuffled_rhat<R: Rng>(chains: &[&ShuffleBlocks], rng: &mut R) -> f64 {
    let l = chains.len();
    if l == 0 {
        return f64::NAN;
    }
    let d = chains[0].d();
    let mut sums = vec![CenteredSums::default(); l];
    for slot in sums.iter_mut() {
        for block in 0..d {
            let src = rng.random_range(0..l);
            slot.add(&chains[src].block(block));
        }
    }
    rhat_from_sums(&sums).map_or(f64::NAN, |p| p.rhat)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let i = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1);
            counts[i as usize] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Comparison of the observed maximum R-hat with the benchmark draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub observed: f64,
    pub quantile: f64,
    /// Empirical `quantile` of the benchmark draws.
    pub threshold: f64,
    pub histogram: Histogram,
}

/// Pass when `observed` does not exceed the empirical `quantile` of the
/// defined benchmark draws.
pub fn benchmark_verdict(observed: f64, draws: &[f64], quantile: f64) -> Result<Verdict> {
    let mut sorted: Vec<f64> = draws.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Err(Error::UndefinedDiagnostic("benchmark has no draws".into()));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::invalid(format!("quantile {quantile} outside [0, 1]")));
    }
    sorted.sort_by(f64::total_cmp);
    let idx = ((quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let threshold = sorted[idx];
    let lo = sorted[0].min(observed);
    let hi = sorted[sorted.len() - 1].max(observed);
    Ok(Verdict {
        pass: observed <= threshold,
        observed,
        quantile,
        threshold,
        histogram: Histogram::new(&sorted, lo, hi, 20),
    })
}
