//! Orchestration: full-data fits, the parallel CV run, and report assembly.

mod config;
mod full;
mod pcv;
mod report;

pub use config::{default_threads, Corruption, CorruptionKind, FullDataConfig, RunConfig};
pub use full::{param_diagnostics, run_full_data, FullDataDiagnostics, FullDataResult, ParamDiagnostics};
pub use pcv::{run_pcv, Candidate};
pub use report::{BenchmarkReport, FailReason, FailedFold, ModelReport, PcvReport, Snapshot};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::models::HierGaussian;

/// Runs `f` inside a dedicated pool of `threads` workers.
pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Full-data fits followed by the CV run for one or two models.
///
/// With common random numbers every model uses the stream coordinates of
/// model 0, in the full-data fit as well as in the fold chains.
pub fn run_pipeline(models: &[&dyn Model], full: &FullDataConfig, cfg: &RunConfig) -> Result<(Vec<FullDataResult>, PcvReport)> {
    let fits = models
        .iter()
        .enumerate()
        .map(|(m, model)| {
            let stream = if cfg.common_random_numbers { 0 } else { m as u32 };
            run_full_data(*model, full, stream)
        })
        .collect::<Result<Vec<_>>>()?;
    let cands: Vec<Candidate<'_>> = models
        .iter()
        .zip(&fits)
        .map(|(model, fit)| Candidate {
            model: *model,
            kernel: &fit.kernel,
            draws: &fit.draws,
        })
        .collect();
    let report = run_pcv(&cands, cfg)?;
    Ok((fits, report))
}

/// Compares two covariate selections of one hierarchical model; both
/// models share data, priors and folds and run in one task pool.
pub fn run_model_pair_masked(
    family: &HierGaussian,
    mask_a: &[bool],
    mask_b: &[bool],
    full: &FullDataConfig,
    cfg: &RunConfig,
) -> Result<PcvReport> {
    let name = family.name();
    let a = family.with_selection(&format!("{name}[A]"), mask_a.to_vec())?;
    let b = family.with_selection(&format!("{name}[B]"), mask_b.to_vec())?;
    let (_, report) = run_pipeline(&[&a, &b], full, cfg)?;
    Ok(report)
}
