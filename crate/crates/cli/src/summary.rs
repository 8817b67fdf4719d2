//! Plain-text rendering of a report.

use std::fmt::Write;

use pcv_core::engine::PcvReport;

fn num(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:.prec$}"),
        None => "n/a".into(),
    }
}

pub fn render(r: &PcvReport) -> String {
    let mut s = String::new();
    let cfg = &r.config;
    let _ = writeln!(
        s,
        "score: {}  chains: {}  iterations: {}  warm-up: {}  batch size: {}",
        cfg.score, cfg.chains, cfg.iters, cfg.warmup, r.batch_size
    );
    let _ = writeln!(s, "{:<24} {:>14} {:>10} {:>14} {:>10}", "model", "score", "mcse", "epistemic se", "ess");
    for m in &r.models {
        let _ = writeln!(
            s,
            "{:<24} {:>14.4} {:>10} {:>14} {:>10}",
            m.name,
            m.total,
            num(m.mcse, 4),
            num(m.epistemic_se, 4),
            num(m.ess, 1)
        );
    }
    if let Some(c) = &r.comparison {
        let _ = writeln!(s, "delta_hat (A - B): {:.4}", c.delta_hat);
        let _ = writeln!(s, "mcse: {}", num(c.mcse, 4));
        let _ = writeln!(s, "epistemic se: {:.4}", c.epistemic_se);
        let _ = writeln!(s, "prob A better: {:.4}", c.prob_a_better);
    } else if r.models.len() == 2 {
        let _ = writeln!(s, "comparison: unavailable (fewer than two usable folds)");
    }
    let _ = writeln!(s, "ess: {}", num(r.ess, 1));
    let threshold = r
        .benchmark
        .as_ref()
        .and_then(|b| b.verdict.as_ref())
        .map(|v| format!("{:.4} ({} quantile of {} replicates)", v.threshold, v.quantile, r.benchmark.as_ref().map_or(0, |b| b.replicates)));
    let _ = writeln!(
        s,
        "rhat_max: {}  benchmark: {}",
        num(r.rhat_max, 4),
        threshold.unwrap_or_else(|| "n/a".into())
    );
    if r.rhat_undefined > 0 {
        let _ = writeln!(s, "folds with undefined rhat: {}", r.rhat_undefined);
    }
    let _ = writeln!(s, "divergences: {}", r.total_divergences());
    if r.failed_folds.is_empty() {
        let _ = writeln!(s, "failed folds: none");
    } else {
        let list: Vec<String> = r
            .failed_folds
            .iter()
            .map(|f| format!("{} (model {}, {:?})", f.fold, f.model, f.reason))
            .collect();
        let _ = writeln!(s, "failed folds: {}", list.join(", "));
    }
    if !r.excluded_folds.is_empty() {
        let list: Vec<String> = r.excluded_folds.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "excluded folds: {}", list.join(", "));
    }
    let verdict = match r.benchmark.as_ref().and_then(|b| b.verdict.as_ref()) {
        Some(v) if v.pass => "pass",
        Some(_) => "fail",
        None => "unavailable",
    };
    let _ = writeln!(s, "verdict: {verdict}");
    s
}
