//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use pcv_core::data::Dataset;
use pcv_core::draws::DrawBank;
use pcv_core::engine::{run_full_data, run_pcv, Candidate, PcvReport};
use pcv_core::error::Error;
use pcv_core::hmc::KernelParams;
use pcv_core::io::{parse_batch, write_benchmark_csv, write_folds_csv, write_progressive_csv, RunManifest};
use pcv_core::model::Model;
use pcv_core::models::simulate::{simulate_grouped_regression, simulate_radon, simulate_rats, simulate_seasonal_ar};
use pcv_core::models::{build_pair, ModelKind};
use pcv_core::rng::{Purpose, StreamKey};
use serde::Serialize;

use crate::{summary, Common, Failure, FitArgs, PcvArgs, ReportArgs, SimulateArgs};

type CmdResult = Result<(), Failure>;

/// File stems of the two candidates' artifacts.
const STEMS: [&str; 2] = ["model_a", "model_b"];

fn require(value: Option<usize>, flag: &str, model: &str) -> Result<usize, Failure> {
    value.ok_or_else(|| Failure::usage(format!("simulate {model} requires {flag}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CmdResult {
    let kind: ModelKind = a.model.parse().map_err(|e: Error| Failure::usage(e.to_string()))?;
    let mut rng = StreamKey::new(a.seed, Purpose::Simulate).rng(0);
    let name = kind.to_string();
    let (ds, truth) = match kind {
        ModelKind::GroupedReg => {
            let j = require(a.j, "--J", &name)?;
            let nj = require(a.nj, "--Nj", &name)?;
            let (ds, t) = simulate_grouped_regression(j, nj, true, &mut rng)?;
            (ds, serde_json::to_value(t))
        }
        ModelKind::Rats => {
            let (ds, t) = simulate_rats(require(a.j, "--J", &name)?, &mut rng)?;
            (ds, serde_json::to_value(t))
        }
        ModelKind::Radon => {
            let n = require(a.n, "--N", &name)?;
            let (ds, t) = simulate_radon(n, require(a.j, "--J", &name)?, &mut rng)?;
            (ds, serde_json::to_value(t))
        }
        ModelKind::SeasonalAr => {
            let (ds, t) = simulate_seasonal_ar(require(a.t, "--T", &name)?, a.p, a.q, &mut rng)?;
            (ds, serde_json::to_value(t))
        }
    };
    let truth = truth.map_err(Error::from)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    fs::write(&a.out, buf)?;
    write_json(&a.out.with_extension("truth.json"), &truth)?;
    println!("wrote {} rows to {}", ds.len(), a.out.display());
    Ok(())
}

fn load_manifest(c: &Common) -> Result<RunManifest, Failure> {
    let mut m = RunManifest::from_file(&c.config)?;
    if let Some(s) = c.seed {
        m.fit.seed = s;
        m.pcv.seed = s;
        m.model.seed = s;
    }
    Ok(m)
}

fn load_data(m: &RunManifest) -> Result<Dataset, Failure> {
    if !m.data.path.exists() {
        return Err(Failure::usage(format!("dataset {} does not exist", m.data.path.display())));
    }
    Ok(Dataset::read_csv_path(&m.data.path, &m.data.roles()?)?)
}

#[derive(Serialize)]
struct AdaptationDump<'a> {
    model: &'a str,
    reason: &'a str,
    last_position: &'a [f64],
    param_names: Vec<String>,
}

pub fn fit(a: FitArgs) -> CmdResult {
    let mut m = load_manifest(&a.common)?;
    let fit = &mut m.fit;
    if let Some(v) = a.common.chains {
        fit.chains = v;
    }
    if let Some(v) = a.common.warmup {
        fit.warmup = v;
    }
    if let Some(v) = a.common.threads {
        fit.threads = v;
    }
    if let Some(v) = a.draws {
        fit.draws = v;
    }
    let out = a.common.out.clone().unwrap_or_else(|| m.fit_dir.clone());
    let ds = load_data(&m)?;
    let (ma, mb) = build_pair(&ds, &m.model)?;
    fs::create_dir_all(&out)?;
    for (i, model) in [ma.as_ref(), mb.as_ref()].into_iter().enumerate() {
        let stream = if m.pcv.common_random_numbers { 0 } else { i as u32 };
        let result = match run_full_data(model, &m.fit, stream) {
            Ok(r) => r,
            Err(Error::AdaptationFailed { reason, last_position }) => {
                let dump = out.join(format!("{}.adaptation_failure.json", STEMS[i]));
                write_json(
                    &dump,
                    &AdaptationDump {
                        model: model.name(),
                        reason: &reason,
                        last_position: &last_position,
                        param_names: model.param_names(),
                    },
                )?;
                return Err(Failure {
                    code: 3,
                    message: format!(
                        "adaptation failed for {}: {reason} (diagnostics in {})",
                        model.name(),
                        dump.display()
                    ),
                });
            }
            Err(e) => return Err(e.into()),
        };
        result.draws.save(&out, STEMS[i])?;
        write_json(&out.join(format!("{}.kernel.json", STEMS[i])), &result.kernel)?;
        write_json(&out.join(format!("{}.diagnostics.json", STEMS[i])), &result.diagnostics)?;
        let worst = result
            .diagnostics
            .params
            .iter()
            .filter_map(|p| p.rhat)
            .fold(f64::NAN, f64::max);
        println!(
            "{}: step size {:.4}, max R-hat {:.4}, divergences {}",
            model.name(),
            result.kernel.step_size,
            worst,
            result.diagnostics.divergences.iter().sum::<u64>()
        );
    }
    Ok(())
}

/// Loads the saved fit of one candidate, checking it matches the model.
fn load_fit(dir: &Path, stem: &str, model: &dyn Model) -> Result<(KernelParams, DrawBank), Failure> {
    let kernel_path = dir.join(format!("{stem}.kernel.json"));
    let missing = [
        kernel_path.clone(),
        dir.join(format!("{stem}.draws.bin")),
        dir.join(format!("{stem}.draws.json")),
    ]
    .into_iter()
    .filter(|p| !p.exists())
    .collect::<Vec<PathBuf>>();
    if !missing.is_empty() {
        return Err(Failure::usage(format!(
            "missing full-data artifacts: {} (run `pcv fit` first)",
            missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    let kernel: KernelParams =
        serde_json::from_str(&fs::read_to_string(&kernel_path)?).map_err(Error::from)?;
    let bank = DrawBank::load(dir, stem)?;
    if bank.param_names != model.param_names() {
        return Err(Failure::usage(format!(
            "saved draws in {} do not match model {}",
            dir.display(),
            model.name()
        )));
    }
    Ok((kernel, bank))
}

pub fn pcv(a: PcvArgs) -> CmdResult {
    let mut m = load_manifest(&a.common)?;
    let cfg = &mut m.pcv;
    if let Some(v) = a.common.chains {
        cfg.chains = v;
    }
    if let Some(v) = a.common.warmup {
        cfg.warmup = v;
    }
    if let Some(v) = a.common.threads {
        cfg.threads = v;
    }
    if let Some(v) = a.iters {
        cfg.iters = v;
    }
    if let Some(v) = &a.batch_size {
        cfg.batch = parse_batch(v)?;
    }
    if let Some(v) = a.blocks {
        cfg.blocks = v;
    }
    if let Some(v) = a.bench_draws {
        cfg.bench_draws = v;
    }
    if let Some(v) = &a.score {
        cfg.score = v.parse().map_err(|e: Error| Failure::usage(e.to_string()))?;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    let out = a.common.out.clone().unwrap_or_else(|| m.pcv_dir.clone());
    let fit_dir = a.fit_dir.clone().unwrap_or_else(|| m.fit_dir.clone());

    let ds = load_data(&m)?;
    let (ma, mb) = build_pair(&ds, &m.model)?;
    let (ka, da) = load_fit(&fit_dir, STEMS[0], ma.as_ref())?;
    let (kb, db) = load_fit(&fit_dir, STEMS[1], mb.as_ref())?;
    let cands = [
        Candidate {
            model: ma.as_ref(),
            kernel: &ka,
            draws: &da,
        },
        Candidate {
            model: mb.as_ref(),
            kernel: &kb,
            draws: &db,
        },
    ];
    let report = run_pcv(&cands, &m.pcv)?;

    fs::create_dir_all(&out)?;
    fs::write(out.join("report.json"), report.to_json().map_err(Error::from)? + "\n")?;
    let mut buf = Vec::new();
    write_progressive_csv(&report.snapshots, &mut buf)?;
    fs::write(out.join("progressive.csv"), buf)?;
    let mut buf = Vec::new();
    write_folds_csv(&report, &mut buf)?;
    fs::write(out.join("folds.csv"), buf)?;
    if let Some(bench) = &report.benchmark {
        let mut buf = Vec::new();
        write_benchmark_csv(bench, report.rhat_max, &mut buf)?;
        fs::write(out.join("benchmark.csv"), buf)?;
    }
    print!("{}", summary::render(&report));
    Ok(())
}

pub fn report(a: ReportArgs) -> CmdResult {
    let path = if a.path.is_dir() {
        a.path.join("report.json")
    } else {
        a.path
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let report = PcvReport::from_json(&text)
        .map_err(|e| Failure::usage(format!("{} is not a valid report: {e}", path.display())))?;
    print!("{}", summary::render(&report));
    Ok(())
}

