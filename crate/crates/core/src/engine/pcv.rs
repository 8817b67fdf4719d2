//! The parallel CV run: warm-started fold chains, online accumulation,
//! checkpoint snapshots, and the final merge into a report.
//!
//! Every (model, fold, chain) is an independent task with its own random
//! streams. Tasks run in two parallel phases separated by one barrier: the
//! fold warm-up, after which the coordinator fixes each fold's centering
//! constants, and sampling. All merging happens on the coordinator in
//! (model, fold, chain) order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::config::{CorruptionKind, RunConfig};
use super::report::{BenchmarkReport, FailReason, FailedFold, ModelReport, PcvReport, Snapshot};
use super::with_pool;
use crate::accum::{ChainAccumulator, HsSums, LogBatchMeans, LogSum, ShuffleBlocks, WelfordVec};
use crate::diagnostics::{benchmark_verdict, ess, rhat_from_sums, rhat_max, shuffle_benchmark};
use crate::draws::DrawBank;
use crate::error::{Error, Result};
use crate::hmc::{hmc_step, init_fold_chains, warmup_discard, ChainState, KernelParams};
use crate::model::{FoldTarget, Model};
use crate::rng::{Purpose, StreamKey};
use crate::scoring::{compare, delta_method_mcse, dss_fold_score, hs_fold_score, logs_fold_score, LogsFold, Score};

/// A model together with its full-data fit.
#[derive(Clone, Copy)]
pub struct Candidate<'a> {
    pub model: &'a dyn Model,
    pub kernel: &'a KernelParams,
    pub draws: &'a DrawBank,
}

#[derive(Clone, Copy)]
struct Task {
    m: usize,
    k: usize,
    l: usize,
}

/// Running means gathered during the fold warm-up of one chain.
struct WarmupOut {
    state: Option<ChainState>,
    divergences: u64,
    lp: Option<f64>,
    hs: Option<(Vec<f64>, Vec<f64>)>,
    dss: Option<Vec<f64>>,
}

/// Centering constants shared by the chains of one (model, fold).
#[derive(Clone)]
struct FoldConstants {
    c: f64,
    hs: Option<(Vec<f64>, Vec<f64>)>,
    dss: Option<Vec<f64>>,
}

struct ChainOut {
    init_failed: bool,
    snapshots: Vec<ChainAccumulator>,
    draws: Option<Vec<f64>>,
}

/// Runs the CV workflow for one or two models. With two models the report
/// compares the first (A) against the second (B).
pub fn run_pcv(cands: &[Candidate<'_>], cfg: &RunConfig) -> Result<PcvReport> {
    cfg.validate()?;
    check_candidates(cands, cfg)?;
    with_pool(cfg.threads, || run_inner(cands, cfg))?
}

fn check_candidates(cands: &[Candidate<'_>], cfg: &RunConfig) -> Result<()> {
    if cands.is_empty() || cands.len() > 2 {
        return Err(Error::invalid(format!("expected one or two models, got {}", cands.len())));
    }
    for c in cands {
        if !c.model.supports(cfg.score) {
            return Err(Error::UnsupportedScore {
                score: cfg.score.to_string(),
                model: c.model.name().to_string(),
            });
        }
        c.kernel.validate(c.model.dim())?;
        if c.draws.dim() != c.model.dim() {
            return Err(Error::invalid(format!(
                "draw bank has {} parameters but model {} has {}",
                c.draws.dim(),
                c.model.name(),
                c.model.dim()
            )));
        }
        if c.model.n_folds() == 0 {
            return Err(Error::invalid("model has no folds"));
        }
    }
    if cands.len() == 2 {
        let (a, b) = (cands[0].model, cands[1].model);
        if a.folds().test_index != b.folds().test_index {
            return Err(Error::invalid("compared models must share the fold assignment"));
        }
        if a.n_folds() < 2 {
            return Err(Error::invalid("a model comparison needs at least two folds"));
        }
    }
    Ok(())
}

fn stream_index(cfg: &RunConfig, m: usize) -> u32 {
    if cfg.common_random_numbers {
        0
    } else {
        m as u32
    }
}

fn chain_key(cfg: &RunConfig, t: Task, purpose: Purpose) -> StreamKey {
    StreamKey::new(cfg.seed, purpose)
        .model(stream_index(cfg, t.m))
        .fold(t.k as u32)
        .chain(t.l as u32)
}

fn run_inner(cands: &[Candidate<'_>], cfg: &RunConfig) -> Result<PcvReport> {
    let k_folds = cands[0].model.n_folds();
    let l_chains = cfg.chains;
    let tasks: Vec<Task> = (0..cands.len())
        .flat_map(|m| (0..k_folds).flat_map(move |k| (0..l_chains).map(move |l| Task { m, k, l })))
        .collect();

    let starts: Vec<Vec<Vec<Vec<f64>>>> = cands
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let key = StreamKey::new(cfg.seed, Purpose::Init).model(stream_index(cfg, m));
            init_fold_chains(c.draws, k_folds, l_chains, key)
        })
        .collect::<Result<_>>()?;

    let warm: Vec<WarmupOut> = tasks
        .par_iter()
        .map(|&t| fold_warmup(cands[t.m].model, cands[t.m].kernel, &starts[t.m][t.k][t.l], t, cfg))
        .collect();

    let constants: Vec<Vec<FoldConstants>> = (0..cands.len())
        .map(|m| {
            (0..k_folds)
                .map(|k| {
                    let first = (m * k_folds + k) * l_chains;
                    fold_constants(&warm[first..first + l_chains], cfg.score, cands[m].model.test_values(k).len())
                })
                .collect()
        })
        .collect();

    let checkpoints = cfg.checkpoints();
    let outs: Vec<ChainOut> = tasks
        .par_iter()
        .zip(warm.into_par_iter())
        .map(|(&t, w)| sample_chain(cands[t.m].model, cands[t.m].kernel, w, &constants[t.m][t.k], t, cfg, &checkpoints))
        .collect();

    let tests: Vec<Vec<Vec<f64>>> = cands
        .iter()
        .map(|c| (0..k_folds).map(|k| c.model.test_values(k)).collect())
        .collect();
    let layout = Layout {
        models: cands.len(),
        folds: k_folds,
        chains: l_chains,
    };

    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut last = None;
    for (ci, &iteration) in checkpoints.iter().enumerate() {
        let view = |t: Task| &outs[layout.index(t)].snapshots[ci];
        let summary = summarize(&layout, &view, &outs, &tests, cfg, iteration)?;
        snapshots.push(summary.snapshot(iteration));
        last = Some(summary);
    }
    let summary = last.expect("at least one checkpoint");
    let final_view = |t: Task| outs[layout.index(t)].snapshots.last().expect("final snapshot");

    let benchmark = run_benchmark(&layout, &final_view, &summary, cfg);
    let models = (0..cands.len())
        .map(|m| model_report(&layout, &final_view, &summary, &constants[m], m, cands[m].model.name()))
        .collect();
    let stored_draws = cfg.store_draws.then(|| {
        (0..cands.len())
            .map(|m| {
                (0..k_folds)
                    .map(|k| {
                        (0..l_chains)
                            .map(|l| outs[layout.index(Task { m, k, l })].draws.clone().unwrap_or_default())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });

    Ok(PcvReport {
        config: cfg.clone(),
        batch_size: cfg.batch_size(),
        comparison: summary.comparison.clone(),
        ess: summary.ess,
        rhat_max: summary.rhat_max,
        rhat_undefined: summary.rhat_undefined,
        failed_folds: summary.failed.clone(),
        excluded_folds: summary.excluded.clone(),
        dropped_per_chain: final_view(Task { m: 0, k: 0, l: 0 }).batches.dropped(),
        benchmark,
        models,
        snapshots,
        stored_draws,
    })
}

fn fold_warmup(model: &dyn Model, kernel: &KernelParams, start: &[f64], t: Task, cfg: &RunConfig) -> WarmupOut {
    let target = FoldTarget { model, fold: t.k };
    let mut state = match ChainState::new(&target, start.to_vec()) {
        Ok(s) => s,
        Err(_) => {
            return WarmupOut {
                state: None,
                divergences: 0,
                lp: None,
                hs: None,
                dss: None,
            }
        }
    };
    let m_test = model.test_values(t.k).len();
    let pred_key = chain_key(cfg, t, Purpose::Predictive);
    let mut lp = (0.0, 0u64);
    let mut hs = (vec![0.0; m_test], vec![0.0; m_test], 0u64);
    let mut dss = (vec![0.0; m_test], 0u64);
    let mut counter = 0u64;
    let mut visit = |s: &ChainState| {
        let v = model.log_pred(&s.position, t.k);
        if v.is_finite() {
            lp.0 += v;
            lp.1 += 1;
        }
        match cfg.score {
            Score::LogS => {}
            Score::Hs => {
                if let Some(d) = model.pred_derivs(&s.position, t.k) {
                    if d.iter().all(|(a, b)| a.is_finite() && b.is_finite()) {
                        for (i, (d1, d2)) in d.into_iter().enumerate() {
                            hs.0[i] += d2 + d1 * d1;
                            hs.1[i] += d1;
                        }
                        hs.2 += 1;
                    }
                }
            }
            Score::Dss => {
                if let Some(x) = model.pred_sample(&s.position, t.k, &mut pred_key.rng(counter)) {
                    if x.iter().all(|v| v.is_finite()) {
                        for (acc, v) in dss.0.iter_mut().zip(x) {
                            *acc += v;
                        }
                        dss.1 += 1;
                    }
                }
            }
        }
        counter += 1;
    };
    let divergences = if cfg.warmup == 0 {
        visit(&state);
        0
    } else {
        warmup_discard(&mut state, &target, kernel, cfg.warmup, chain_key(cfg, t, Purpose::Chain), &mut visit)
    };
    let mean = |xs: Vec<f64>, n: u64| xs.into_iter().map(|x| x / n as f64).collect::<Vec<_>>();
    WarmupOut {
        state: Some(state),
        divergences,
        lp: (lp.1 > 0).then(|| lp.0 / lp.1 as f64),
        hs: (hs.2 > 0).then(|| (mean(hs.0, hs.2), mean(hs.1, hs.2))),
        dss: (dss.1 > 0).then(|| mean(dss.0, dss.1)),
    }
}

/// Averages per-chain warm-up means in chain order; anything unavailable
/// centers at zero.
fn fold_constants(chains: &[WarmupOut], score: Score, m_test: usize) -> FoldConstants {
    fn avg<'a>(items: impl Iterator<Item = &'a Vec<f64>>, m: usize) -> Vec<f64> {
        let mut sum = vec![0.0; m];
        let mut n = 0;
        for v in items {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        sum
    }
    let lps: Vec<f64> = chains.iter().filter_map(|w| w.lp).collect();
    let c = if lps.is_empty() {
        0.0
    } else {
        lps.iter().sum::<f64>() / lps.len() as f64
    };
    let hs = (score == Score::Hs).then(|| {
        (
            avg(chains.iter().filter_map(|w| w.hs.as_ref().map(|h| &h.0)), m_test),
            avg(chains.iter().filter_map(|w| w.hs.as_ref().map(|h| &h.1)), m_test),
        )
    });
    let dss = (score == Score::Dss).then(|| avg(chains.iter().filter_map(|w| w.dss.as_ref()), m_test));
    FoldConstants { c, hs, dss }
}

#[allow(clippy::too_many_arguments)]
fn sample_chain(
    model: &dyn Model,
    kernel: &KernelParams,
    warm: WarmupOut,
    consts: &FoldConstants,
    t: Task,
    cfg: &RunConfig,
    checkpoints: &[usize],
) -> ChainOut {
    let n = cfg.iters;
    let mut acc = ChainAccumulator::new(cfg.batch_size(), cfg.blocks, consts.c);
    acc.hs = consts.hs.clone().map(|(c1, c2)| HsSums::new(c1, c2));
    acc.dss = consts.dss.clone().map(WelfordVec::new);
    acc.warmup_divergences = warm.divergences;
    let Some(mut state) = warm.state else {
        return ChainOut {
            init_failed: true,
            snapshots: vec![acc; checkpoints.len()],
            draws: None,
        };
    };
    let target = FoldTarget { model, fold: t.k };
    let key = chain_key(cfg, t, Purpose::Chain);
    let pred_key = chain_key(cfg, t, Purpose::Predictive);
    let corrupt = cfg
        .corruption
        .filter(|c| c.model == t.m && c.fold == t.k && c.chain == t.l)
        .map(|c| c.kind);
    let offset = cfg.warmup.max(1) as u64;
    let mut first = None;
    let mut stored = cfg.store_draws.then(|| Vec::with_capacity(n));
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next = 0;

    for it in 0..n {
        let info = hmc_step(&mut state, &target, kernel, &mut key.rng(cfg.warmup as u64 + it as u64));
        acc.divergences += info.divergent as u64;
        let mut lp = model.log_pred(&state.position, t.k);
        match corrupt {
            Some(CorruptionKind::Stuck) => lp = *first.get_or_insert(lp),
            Some(CorruptionKind::Shift(delta)) => lp += delta,
            None => {}
        }
        acc.record(lp, it, n);
        if let Some(hs) = acc.hs.as_mut() {
            if let Some(d) = model.pred_derivs(&state.position, t.k) {
                if d.iter().all(|(a, b)| a.is_finite() && b.is_finite()) {
                    hs.update(&d);
                }
            }
        }
        if let Some(dss) = acc.dss.as_mut() {
            if let Some(x) = model.pred_sample(&state.position, t.k, &mut pred_key.rng(offset + it as u64)) {
                if x.iter().all(|v| v.is_finite()) {
                    dss.update(&x);
                }
            }
        }
        if let Some(s) = stored.as_mut() {
            s.push(lp);
        }
        if checkpoints.get(next) == Some(&(it + 1)) {
            snapshots.push(acc.clone());
            next += 1;
        }
    }
    ChainOut {
        init_failed: false,
        snapshots,
        draws: stored,
    }
}

struct Layout {
    models: usize,
    folds: usize,
    chains: usize,
}

impl Layout {
    fn index(&self, t: Task) -> usize {
        (t.m * self.folds + t.k) * self.chains + t.l
    }

    fn chains_of<'a>(&self, view: &impl Fn(Task) -> &'a ChainAccumulator, m: usize, k: usize) -> Vec<&'a ChainAccumulator> {
        (0..self.chains).map(|l| view(Task { m, k, l })).collect()
    }
}

struct FoldSummary {
    logs: LogsFold,
    score: f64,
    rhat: Option<f64>,
    failed: Option<FailReason>,
    ridged: bool,
}

struct Summary {
    folds: Vec<Vec<FoldSummary>>,
    failed: Vec<FailedFold>,
    excluded: Vec<usize>,
    included: Vec<usize>,
    totals: Vec<f64>,
    mcse: Vec<Option<f64>>,
    epistemic_se: Vec<Option<f64>>,
    model_ess: Vec<Option<f64>>,
    comparison: Option<crate::scoring::ComparisonResult>,
    ess: Option<f64>,
    rhat_max: Option<f64>,
    rhat_undefined: usize,
}

impl Summary {
    fn snapshot(&self, iteration: usize) -> Snapshot {
        match &self.comparison {
            Some(c) => Snapshot {
                iteration,
                delta_hat: c.delta_hat,
                mcse: c.mcse,
                epistemic_se: Some(c.epistemic_se),
                prob_a_better: Some(c.prob_a_better),
                ess: self.ess,
                rhat_max: self.rhat_max,
            },
            None => Snapshot {
                iteration,
                delta_hat: if self.totals.len() == 1 { self.totals[0] } else { f64::NAN },
                mcse: self.mcse[0],
                epistemic_se: self.epistemic_se[0],
                prob_a_better: None,
                ess: self.ess,
                rhat_max: self.rhat_max,
            },
        }
    }
}

fn summarize<'a>(
    layout: &Layout,
    view: &impl Fn(Task) -> &'a ChainAccumulator,
    outs: &[ChainOut],
    tests: &[Vec<Vec<f64>>],
    cfg: &RunConfig,
    iteration: usize,
) -> Result<Summary> {
    let mut folds = Vec::with_capacity(layout.models);
    let mut failed = Vec::new();
    for m in 0..layout.models {
        let mut per_fold = Vec::with_capacity(layout.folds);
        for k in 0..layout.folds {
            let chains = layout.chains_of(view, m, k);
            let init_failed = (0..layout.chains).any(|l| outs[layout.index(Task { m, k, l })].init_failed);
            let fs = fold_summary(&chains, &tests[m][k], cfg.score, init_failed);
            if let Some(reason) = fs.failed {
                failed.push(FailedFold { model: m, fold: k, reason });
            }
            per_fold.push(fs);
        }
        folds.push(per_fold);
    }
    let excluded: Vec<usize> = (0..layout.folds)
        .filter(|&k| folds.iter().any(|f| f[k].failed.is_some()))
        .collect();
    let included: Vec<usize> = (0..layout.folds).filter(|k| !excluded.contains(k)).collect();

    let mut totals = Vec::new();
    let mut mcse = Vec::new();
    let mut epistemic_se = Vec::new();
    let mut model_ess = Vec::new();
    for per_fold in &folds {
        let scores: Vec<f64> = included.iter().map(|&k| per_fold[k].score).collect();
        totals.push(scores.iter().sum());
        mcse.push((cfg.score == Score::LogS).then(|| {
            delta_method_mcse(included.iter().map(|&k| per_fold[k].logs.batch_ratio), layout.chains, iteration)
        }));
        epistemic_se.push(
            crate::scoring::epistemic_variance(&scores)
                .ok()
                .map(|v| (scores.len() as f64 * v).sqrt()),
        );
        let logs: Vec<&LogsFold> = included.iter().map(|&k| &per_fold[k].logs).collect();
        model_ess.push(ess(&logs).ok());
    }

    let comparison = if layout.models == 2 && included.len() >= 2 {
        let a: Vec<f64> = included.iter().map(|&k| folds[0][k].score).collect();
        let b: Vec<f64> = included.iter().map(|&k| folds[1][k].score).collect();
        let mc = match (mcse[0], mcse[1]) {
            (Some(x), Some(y)) => Some((x * x + y * y).sqrt()),
            _ => None,
        };
        Some(compare(included.clone(), &a, &b, mc)?)
    } else {
        None
    };

    let all_logs: Vec<&LogsFold> = folds
        .iter()
        .flat_map(|f| included.iter().map(move |&k| &f[k].logs))
        .collect();
    let rhats: Vec<Option<f64>> = folds
        .iter()
        .flat_map(|f| included.iter().map(move |&k| f[k].rhat))
        .collect();
    let ess_all = ess(&all_logs).ok();
    let (rhat_max, rhat_undefined) = match rhat_max(&rhats) {
        Ok((v, n)) => (Some(v), n),
        Err(_) => (None, rhats.len()),
    };

    Ok(Summary {
        folds,
        failed,
        excluded,
        included,
        totals,
        mcse,
        epistemic_se,
        model_ess,
        comparison,
        ess: ess_all,
        rhat_max,
        rhat_undefined,
    })
}

fn fold_summary(chains: &[&ChainAccumulator], y: &[f64], score: Score, init_failed: bool) -> FoldSummary {
    let sums: Vec<&LogSum> = chains.iter().map(|c| &c.logsum).collect();
    let batches: Vec<&LogBatchMeans> = chains.iter().map(|c| &c.batches).collect();
    let logs = logs_fold_score(&sums, &batches);
    let rhat = if chains.iter().all(|c| c.rhat_valid()) {
        let totals: Vec<_> = chains.iter().map(|c| c.blocks.totals()).collect();
        rhat_from_sums(&totals).ok().map(|p| p.rhat)
    } else {
        None
    };
    let mut ridged = false;
    let mut fail = None;
    let divergent = chains.iter().all(|c| 2 * c.divergences > c.iterations);
    let value = match score {
        Score::LogS => logs.log_f_hat,
        Score::Hs => match merged(chains.iter().filter_map(|c| c.hs.as_ref())) {
            Some(h) if h.count > 0 => -hs_fold_score(&h),
            _ => f64::NAN,
        },
        Score::Dss => {
            let mut it = chains.iter().filter_map(|c| c.dss.as_ref());
            match it.next() {
                Some(first) => {
                    let mut w = first.clone();
                    for other in it {
                        w.merge(other);
                    }
                    match dss_fold_score(&w, y) {
                        Ok(d) => {
                            ridged = d.ridged;
                            d.value
                        }
                        Err(_) => f64::NAN,
                    }
                }
                None => f64::NAN,
            }
        }
    };
    if init_failed {
        fail = Some(FailReason::Initialization);
    } else if divergent {
        fail = Some(FailReason::Divergent);
    } else if !value.is_finite() || logs.is_fault() {
        fail = Some(FailReason::NumericFault);
    }
    FoldSummary {
        logs,
        score: value,
        rhat,
        failed: fail,
        ridged,
    }
}

fn merged<'a>(mut items: impl Iterator<Item = &'a HsSums>) -> Option<HsSums> {
    let mut out = items.next()?.clone();
    for h in items {
        out.merge(h);
    }
    Some(out)
}

fn run_benchmark<'a>(
    layout: &Layout,
    view: &impl Fn(Task) -> &'a ChainAccumulator,
    summary: &Summary,
    cfg: &RunConfig,
) -> Option<BenchmarkReport> {
    if cfg.bench_draws == 0 {
        return None;
    }
    let folds: Vec<Vec<&ShuffleBlocks>> = (0..layout.models)
        .flat_map(|m| {
            summary
                .included
                .iter()
                .filter(move |&&k| summary.folds[m][k].rhat.is_some())
                .map(move |&k| layout.chains_of(view, m, k).into_iter().map(|c| &c.blocks).collect())
        })
        .collect();
    if folds.is_empty() {
        return None;
    }
    let draws = shuffle_benchmark(&folds, cfg.bench_draws, StreamKey::new(cfg.seed, Purpose::Benchmark));
    let verdict = summary
        .rhat_max
        .and_then(|obs| benchmark_verdict(obs, &draws.replicate_max, cfg.verdict_quantile).ok());
    Some(BenchmarkReport {
        blocks: cfg.blocks,
        replicates: cfg.bench_draws,
        batch_size: cfg.batch_size(),
        replicate_max: draws.replicate_max,
        verdict,
    })
}

fn model_report<'a>(
    layout: &Layout,
    view: &impl Fn(Task) -> &'a ChainAccumulator,
    summary: &Summary,
    consts: &[FoldConstants],
    m: usize,
    name: &str,
) -> ModelReport {
    let folds = &summary.folds[m];
    let per_chain = |f: &dyn Fn(&ChainAccumulator) -> u64| -> Vec<Vec<u64>> {
        (0..layout.folds)
            .map(|k| layout.chains_of(view, m, k).into_iter().map(f).collect())
            .collect()
    };
    ModelReport {
        name: name.to_string(),
        total: summary.totals[m],
        mcse: summary.mcse[m],
        epistemic_se: summary.epistemic_se[m],
        ess: summary.model_ess[m],
        fold_scores: folds.iter().map(|f| f.score).collect(),
        fold_log_score: folds.iter().map(|f| f.logs.log_f_hat).collect(),
        fold_ess: folds.iter().map(|f| f.logs.ess()).collect(),
        rhat: folds.iter().map(|f| f.rhat).collect(),
        centering: consts.iter().map(|c| c.c).collect(),
        divergences: per_chain(&|c| c.divergences),
        warmup_divergences: per_chain(&|c| c.warmup_divergences),
        neg_inf_draws: per_chain(&|c| c.neg_inf).iter().flatten().sum(),
        dss_ridged: (0..layout.folds).filter(|&k| folds[k].ridged).collect(),
    }
}
