use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pcv_core::engine::{FailReason, FailedFold, PcvReport};
use pcv_core::io::{read_benchmark_csv, read_progressive_csv};
use tempfile::TempDir;

fn pcv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run pcv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    o
}

const SMALL: &str = "[data]
path = data.csv
[model]
kind = grouped-reg
[fit]
warmup = 300
draws = 200
threads = 2
[pcv]
iters = 200
warmup = 20
batch_size = 20
bench_draws = 50
checkpoint_every = 50
threads = 2
";

/// Simulated data plus a config in a fresh directory.
fn project(j: &str, config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(pcv(dir.path(), &["simulate", "grouped-reg", "--J", j, "--Nj", "5", "--seed", "1", "--out", "data.csv"]));
    fs::write(dir.path().join("run.ini"), config).unwrap();
    dir
}

#[test]
fn simulate_writes_example_sized_dataset_and_truth() {
    let dir = TempDir::new().unwrap();
    ok(pcv(dir.path(), &["simulate", "grouped-reg", "--J", "50", "--Nj", "5", "--seed", "1", "--out", "a.csv"]));
    ok(pcv(dir.path(), &["simulate", "grouped-reg", "--J", "50", "--Nj", "5", "--seed", "1", "--out", "b.csv"]));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 251);
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.truth.json")).unwrap(),
        fs::read(dir.path().join("b.truth.json")).unwrap()
    );
    let truth: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["alpha"].as_array().unwrap().len(), 50);
}

#[test]
fn simulate_usage_errors() {
    let dir = TempDir::new().unwrap();
    let o = pcv(dir.path(), &["simulate", "grouped-reg", "--Nj", "5", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--J"));
    let o = pcv(dir.path(), &["simulate", "no-such-model", "--J", "3", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn fit_is_reproducible_and_writes_artifacts() {
    let dir = project("10", SMALL);
    let out = ok(pcv(dir.path(), &["fit", "--config", "run.ini"]));
    assert!(stdout(&out).contains("step size"));
    let kernel: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("fit/model_a.kernel.json")).unwrap()).unwrap();
    assert!(kernel["step_size"].as_f64().unwrap() > 0.0);
    let first = fs::read(dir.path().join("fit/model_a.draws.bin")).unwrap();
    assert_eq!(first.len() % 8, 0);
    ok(pcv(dir.path(), &["fit", "--config", "run.ini", "--threads", "1", "--out", "again"]));
    assert_eq!(first, fs::read(dir.path().join("again/model_a.draws.bin")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("fit/model_b.diagnostics.json")).unwrap(),
        fs::read(dir.path().join("again/model_b.diagnostics.json")).unwrap()
    );
}

#[test]
fn corrupt_csv_is_a_usage_error_with_location() {
    let dir = project("10", SMALL);
    fs::write(dir.path().join("data.csv"), "y,x1,x2,x3,x4,group\n1,2,3,4,5,0\n1,abc,3,4,5,0\n").unwrap();
    let o = pcv(dir.path(), &["fit", "--config", "run.ini"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("row 3") && msg.contains("x1"), "{msg}");
}

#[test]
fn failed_adaptation_exits_3_with_dump() {
    let dir = project("10", SMALL);
    let text = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let huge: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                l.to_string()
            } else {
                let (_, rest) = l.split_once(',').unwrap();
                format!("1e200,{rest}")
            }
        })
        .collect();
    fs::write(dir.path().join("data.csv"), huge.join("\n")).unwrap();
    let o = pcv(dir.path(), &["fit", "--config", "run.ini"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let dump: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("fit/model_a.adaptation_failure.json")).unwrap()).unwrap();
    assert!(dump["reason"].as_str().unwrap().contains("starting point"));
}

#[test]
fn pcv_without_fit_is_a_usage_error() {
    let dir = project("10", SMALL);
    let o = pcv(dir.path(), &["pcv", "--config", "run.ini"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing full-data artifacts"));
}

#[test]
fn pcv_rejects_unknown_scores() {
    let dir = project("10", SMALL);
    ok(pcv(dir.path(), &["fit", "--config", "run.ini"]));
    let o = pcv(dir.path(), &["pcv", "--config", "run.ini", "--score", "crps"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("crps"));
}

#[test]
fn checkpoints_give_one_row_each() {
    let dir = project("8", SMALL);
    ok(pcv(dir.path(), &["fit", "--config", "run.ini"]));
    ok(pcv(dir.path(), &["pcv", "--config", "run.ini", "--checkpoint-every", "100", "--n", "1000"]));
    let rows = read_progressive_csv(fs::File::open(dir.path().join("pcv/progressive.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), (1..=10).map(|i| i * 100).collect::<Vec<_>>());
}

#[test]
fn pipeline_is_byte_reproducible_and_outputs_round_trip() {
    let run = || {
        let dir = project("10", SMALL);
        ok(pcv(dir.path(), &["fit", "--config", "run.ini", "--seed", "5"]));
        ok(pcv(dir.path(), &["pcv", "--config", "run.ini", "--seed", "5"]));
        dir
    };
    let (a, b) = (run(), run());
    for f in ["report.json", "progressive.csv", "benchmark.csv", "folds.csv"] {
        let x = fs::read(a.path().join("pcv").join(f)).unwrap();
        assert_eq!(x, fs::read(b.path().join("pcv").join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.path().join("pcv/report.json")).unwrap();
    let report = PcvReport::from_json(&text).unwrap();
    assert_eq!(report.to_json().unwrap() + "\n", text);
    let rows = read_progressive_csv(fs::File::open(a.path().join("pcv/progressive.csv")).unwrap()).unwrap();
    assert_eq!(rows, report.snapshots);
    let bench = read_benchmark_csv(fs::File::open(a.path().join("pcv/benchmark.csv")).unwrap()).unwrap();
    let expected = report.benchmark.as_ref().unwrap();
    assert_eq!(bench.values, expected.replicate_max);
    assert_eq!(bench.observed_rhat_max, report.rhat_max);
    assert_eq!((bench.blocks, bench.replicates), (5, 50));
}

#[test]
fn report_summarizes_divergences_failures_and_verdict() {
    let dir = project("10", SMALL);
    ok(pcv(dir.path(), &["fit", "--config", "run.ini"]));
    ok(pcv(dir.path(), &["pcv", "--config", "run.ini"]));
    let mut report = PcvReport::from_json(&fs::read_to_string(dir.path().join("pcv/report.json")).unwrap()).unwrap();
    let text = stdout(&ok(pcv(dir.path(), &["report", "pcv"])));
    assert!(text.contains(&format!("divergences: {}", report.total_divergences())), "{text}");
    let verdict = report.benchmark.as_ref().unwrap().verdict.as_ref().unwrap();
    let line = if verdict.pass { "verdict: pass" } else { "verdict: fail" };
    assert!(text.contains(line), "{text}");
    assert!(text.contains("failed folds: none"));

    report.failed_folds.push(FailedFold {
        model: 1,
        fold: 3,
        reason: FailReason::Divergent,
    });
    for row in report.models.iter_mut().flat_map(|m| m.divergences.iter_mut()) {
        row.iter_mut().for_each(|d| *d = 0);
    }
    fs::write(dir.path().join("edited.json"), report.to_json().unwrap()).unwrap();
    let text = stdout(&ok(pcv(dir.path(), &["report", "edited.json"])));
    assert!(text.contains("divergences: 0"), "{text}");
    assert!(text.contains("failed folds: 3 (model 1, Divergent)"), "{text}");
}

#[test]
fn malformed_report_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("r.json"), "{\"models\": ").unwrap();
    assert_eq!(pcv(dir.path(), &["report", "r.json"]).status.code(), Some(2));
    assert_eq!(pcv(dir.path(), &["report", "missing.json"]).status.code(), Some(2));
}

#[test]
fn example_one_end_to_end_prefers_the_full_model() {
    let dir = project(
        "50",
        "[data]
path = data.csv
[model]
kind = grouped-reg
[fit]
warmup = 500
draws = 500
[pcv]
iters = 500
warmup = 50
batch_size = 50
bench_draws = 100
",
    );
    ok(pcv(dir.path(), &["fit", "--config", "run.ini"]));
    ok(pcv(dir.path(), &["pcv", "--config", "run.ini"]));
    let report = PcvReport::from_json(&fs::read_to_string(dir.path().join("pcv/report.json")).unwrap()).unwrap();
    let c = report.comparison.unwrap();
    assert_eq!(c.folds.len(), 50);
    assert!(c.prob_a_better >= 0.95, "{c:?}");
}
