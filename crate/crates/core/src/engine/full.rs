//! Full-data fit: adaptation followed by stored sampling on the sentinel
//! fold, with per-parameter diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::FullDataConfig;
use super::with_pool;
use crate::diagnostics::{ess_stored, rhat_stored};
use crate::draws::DrawBank;
use crate::error::Result;
use crate::hmc::{adapt_full_data, hmc_step, AdaptConfig, KernelParams};
use crate::model::{FoldTarget, Model};
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    #[serde(with = "crate::serde_ext::real")]
    pub mean: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub sd: f64,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub rhat: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub ess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullDataDiagnostics {
    pub model: String,
    pub params: Vec<ParamDiagnostics>,
    pub warmup_divergences: u64,
    /// Sampling divergences per chain.
    pub divergences: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct FullDataResult {
    pub kernel: KernelParams,
    pub draws: DrawBank,
    pub diagnostics: FullDataDiagnostics,
}

/// Adapts a kernel on the full data and stores `cfg.draws` positions per
/// chain. `stream` selects the model coordinate of every random stream.
pub fn run_full_data(model: &dyn Model, cfg: &FullDataConfig, stream: u32) -> Result<FullDataResult> {
    cfg.validate()?;
    with_pool(cfg.threads, || full_data_inner(model, cfg, stream))?
}

fn full_data_inner(model: &dyn Model, cfg: &FullDataConfig, stream: u32) -> Result<FullDataResult> {
    let target = FoldTarget { model, fold: model.sentinel() };
    let init = |rng: &mut dyn rand::RngCore| model.sample_prior(rng);
    let acfg = AdaptConfig {
        chains: cfg.chains,
        warmup: cfg.warmup,
        n_leapfrog: cfg.n_leapfrog,
        target_accept: cfg.target_accept,
        init_step: cfg.init_step,
    };
    let key = StreamKey::new(cfg.seed, Purpose::Adapt).model(stream);
    let outcome = adapt_full_data(&target, &init, &acfg, key)?;
    let kernel = outcome.kernel;
    let dim = model.dim();

    let per_chain: Vec<(Vec<f64>, u64)> = outcome
        .states
        .into_par_iter()
        .enumerate()
        .map(|(l, mut state)| {
            let key = StreamKey::new(cfg.seed, Purpose::FullData).model(stream).chain(l as u32);
            let mut values = Vec::with_capacity(cfg.draws * dim);
            let mut div = 0;
            for it in 0..cfg.draws {
                let info = hmc_step(&mut state, &target, &kernel, &mut key.rng(it as u64));
                div += info.divergent as u64;
                values.extend_from_slice(&state.position);
            }
            (values, div)
        })
        .collect();

    let mut values = Vec::with_capacity(cfg.chains * cfg.draws * dim);
    let mut divergences = Vec::with_capacity(cfg.chains);
    for (v, d) in per_chain {
        values.extend(v);
        divergences.push(d);
    }
    let draws = DrawBank::new(model.param_names(), cfg.chains, cfg.draws, values)?;
    let params = param_diagnostics(&draws);
    Ok(FullDataResult {
        kernel,
        draws,
        diagnostics: FullDataDiagnostics {
            model: model.name().to_string(),
            params,
            warmup_divergences: outcome.divergences,
            divergences,
        },
    })
}

/// Mean, sd, R-hat and ESS for every parameter of a draw bank. R-hat needs
/// two chains; ESS uses batches of `floor(sqrt(draws))`.
pub fn param_diagnostics(bank: &DrawBank) -> Vec<ParamDiagnostics> {
    let b = ((bank.draws_per_chain as f64).sqrt().floor() as usize).max(1);
    bank.param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let traces: Vec<Vec<f64>> = (0..bank.chains).map(|l| bank.trace(l, j)).collect();
            let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
            let n = (bank.chains * bank.draws_per_chain) as f64;
            let mean = traces.iter().flatten().sum::<f64>() / n;
            let var = traces.iter().flatten().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let rhat = if bank.chains >= 2 && bank.draws_per_chain >= 2 {
                rhat_stored(&refs).ok().map(|p| p.rhat)
            } else {
                None
            };
            ParamDiagnostics {
                name: name.clone(),
                mean,
                sd: var.sqrt(),
                rhat,
                ess: ess_stored(&refs, b).ok(),
            }
        })
        .collect()
}
