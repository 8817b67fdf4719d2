//! Fold-chain initialization from full-data draws and discarded warm-up.

use rand::Rng;

use super::{hmc_step, ChainState, KernelParams};
use crate::draws::DrawBank;
use crate::error::{Error, Result};
use crate::model::LogDensity;
use crate::rng::{Purpose, StreamKey};

/// Starting positions `[fold][chain]`, each a uniformly chosen full-data
/// draw. Fold `k`, chain `l` uses stream `key.purpose(Init).fold(k).chain(l)`.
pub fn init_fold_chains(bank: &DrawBank, folds: usize, chains: usize, key: StreamKey) -> Result<Vec<Vec<Vec<f64>>>> {
    if bank.is_empty() {
        return Err(Error::invalid("draw bank is empty"));
    }
    Ok((0..folds)
        .map(|k| {
            (0..chains)
                .map(|l| {
                    let mut rng = key.purpose(Purpose::Init).fold(k as u32).chain(l as u32).rng(0);
                    bank.get(rng.random_range(0..bank.len())).to_vec()
                })
                .collect()
        })
        .collect())
}

/// Runs `n` transitions whose draws are not scored, calling `visit` after
/// each. Step `i` uses `key.rng(i)`. Returns the number of divergences.
pub fn warmup_discard(
    state: &mut ChainState,
    target: &dyn LogDensity,
    kernel: &KernelParams,
    n: usize,
    key: StreamKey,
    mut visit: impl FnMut(&ChainState),
) -> u64 {
    let before = state.divergences;
    for i in 0..n {
        hmc_step(state, target, kernel, &mut key.rng(i as u64));
        visit(state);
    }
    state.divergences - before
}
