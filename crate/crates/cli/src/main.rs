//! `pcv`: simulate datasets, fit candidate models on the full data, run the
//! parallel cross-validation, and summarize reports.
//!
//! Exit codes: 0 on success (including a failed convergence verdict), 2 for
//! usage and input errors, 3 when inference itself fails.

mod commands;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcv_core::error::Error;

#[derive(Parser, Debug)]
#[command(name = "pcv", version, about = "Parallel brute-force Bayesian cross-validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset and its true parameters.
    Simulate(SimulateArgs),
    /// Fit both candidate models to the full dataset.
    Fit(FitArgs),
    /// Run the cross-validation from saved full-data fits.
    Pcv(PcvArgs),
    /// Print a summary of a saved report.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// grouped-reg, rats, radon or seasonal-ar
    model: String,
    /// Number of groups.
    #[arg(long = "J")]
    j: Option<usize>,
    /// Observations per group.
    #[arg(long = "Nj")]
    nj: Option<usize>,
    /// Number of observations (radon).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Series length (seasonal-ar).
    #[arg(long = "T")]
    t: Option<usize>,
    /// Autoregressive order (seasonal-ar).
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Seasonal dummies (seasonal-ar).
    #[arg(long, default_value_t = 11)]
    q: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV path; the truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by `fit` and `pcv`; each overrides the config file.
#[derive(Args, Debug)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed for fits, fold assignment and CV chains.
    #[arg(long)]
    seed: Option<u64>,
    /// Chains per model (and per fold).
    #[arg(long)]
    chains: Option<usize>,
    /// Warm-up iterations per chain.
    #[arg(long)]
    warmup: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Retained draws per chain.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args, Debug)]
struct PcvArgs {
    #[command(flatten)]
    common: Common,
    /// Sampling iterations per chain.
    #[arg(long, visible_alias = "n")]
    iters: Option<usize>,
    /// Batch size: a positive integer or `auto`.
    #[arg(long)]
    batch_size: Option<String>,
    /// Blocks per chain for the shuffle benchmark.
    #[arg(long)]
    blocks: Option<usize>,
    /// Shuffle benchmark replicates.
    #[arg(long)]
    bench_draws: Option<usize>,
    /// logs, hs or dss
    #[arg(long)]
    score: Option<String>,
    /// Iterations between progressive snapshots.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Directory holding the full-data fits (defaults to the config's).
    #[arg(long)]
    fit_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A report JSON file or a directory containing `report.json`.
    path: PathBuf,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::AdaptationFailed { .. }
            | Error::NumericFault(_)
            | Error::VarianceUndefined { .. }
            | Error::UndefinedDiagnostic(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Pcv(a) => commands::pcv(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
