//! Run configuration files and the plain-text outputs of a run.
//!
//! The configuration format is sectioned `key = value` text:
//!
//! ```text
//! # comment
//! [data]
//! path = data.csv
//!
//! [model]
//! kind = grouped-reg
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::accum::BatchSize;
use crate::data::ColumnRoles;
use crate::engine::{BenchmarkReport, FullDataConfig, PcvReport, RunConfig, Snapshot};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelOptions};

/// Parsed `[section] key = value` text. Lines starting with `#` or `;` are
/// comments, as is anything after whitespace followed by `#` or `;`. Keys
/// outside any section are an error, as are repeated keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        if (c == b'#' || c == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {lineno}: unterminated section header")))?
                    .trim()
                    .to_string();
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected key = value")))?;
            let section = current
                .as_ref()
                .ok_or_else(|| Error::Config(format!("line {lineno}: key outside a section")))?;
            let key = key.trim().to_string();
            let entries = ini.sections.get_mut(section).expect("section exists");
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {lineno}: duplicate key {section}.{key}")));
            }
        }
        Ok(ini)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{section}.{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<()> {
        if let Some(entries) = self.sections.get(section) {
            for key in entries.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::Config(format!("unknown key {section}.{key}")));
                }
            }
        }
        Ok(())
    }
}

const DATA_KEYS: &[&str] = &["path", "response", "covariates", "group", "time"];
const MODEL_KEYS: &[&str] = &["kind", "scheme", "mask_a", "mask_b", "ar_order", "seasonal_dummies", "ar_prior"];
const FIT_KEYS: &[&str] = &[
    "chains",
    "warmup",
    "draws",
    "n_leapfrog",
    "target_accept",
    "init_step",
    "seed",
    "threads",
    "out",
];
const PCV_KEYS: &[&str] = &[
    "chains",
    "iters",
    "warmup",
    "batch_size",
    "blocks",
    "bench_draws",
    "seed",
    "score",
    "checkpoint_every",
    "threads",
    "verdict_quantile",
    "store_draws",
    "common_random_numbers",
    "out",
];

/// Where the dataset lives and which columns play which role. Roles left
/// unset are inferred from the header.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSource {
    pub path: PathBuf,
    pub response: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub group: Option<String>,
    pub time: Option<String>,
}

impl DataSource {
    /// Column roles for the file: explicit settings win; otherwise `y` is
    /// the response, `group` and `time` are used when present, and every
    /// other column is a covariate.
    pub fn roles(&self) -> Result<ColumnRoles> {
        let file = std::fs::File::open(&self.path)
            .map_err(|e| Error::Config(format!("cannot open dataset {}: {e}", self.path.display())))?;
        let mut first = String::new();
        BufReader::new(file).read_line(&mut first)?;
        let header: Vec<String> = first.trim_end().split(',').map(|h| h.trim().to_string()).collect();
        let response = self.response.clone().unwrap_or_else(|| "y".into());
        let present = |name: &str| header.iter().any(|h| h == name);
        let group = self.group.clone().or_else(|| present("group").then(|| "group".into()));
        let time = self.time.clone().or_else(|| present("time").then(|| "time".into()));
        let covariates = match &self.covariates {
            Some(c) => c.clone(),
            None => header
                .iter()
                .filter(|h| **h != response && Some(*h) != group.as_ref() && Some(*h) != time.as_ref())
                .cloned()
                .collect(),
        };
        Ok(ColumnRoles {
            response,
            covariates,
            group,
            time,
        })
    }
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub data: DataSource,
    pub model: ModelOptions,
    pub fit: FullDataConfig,
    pub fit_dir: PathBuf,
    pub pcv: RunConfig,
    pub pcv_dir: PathBuf,
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::parse(text)?;
        for name in ini.sections.keys() {
            if !["data", "model", "fit", "pcv"].contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }
        ini.check_keys("data", DATA_KEYS)?;
        ini.check_keys("model", MODEL_KEYS)?;
        ini.check_keys("fit", FIT_KEYS)?;
        ini.check_keys("pcv", PCV_KEYS)?;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let list = |v: &str| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();

        let data = DataSource {
            path: resolve(
                ini.get("data", "path")
                    .ok_or_else(|| Error::Config("missing data.path".into()))?,
            ),
            response: ini.get("data", "response").map(str::to_string),
            covariates: ini.get("data", "covariates").map(list),
            group: ini.get("data", "group").map(str::to_string),
            time: ini.get("data", "time").map(str::to_string),
        };

        let kind: ModelKind = ini
            .parsed("model", "kind")?
            .ok_or_else(|| Error::Config("missing model.kind".into()))?;
        let mut model = ModelOptions::new(kind);
        model.scheme = ini.parsed("model", "scheme")?;
        model.mask_a = ini.get("model", "mask_a").map(parse_mask).transpose()?;
        model.mask_b = ini.get("model", "mask_b").map(parse_mask).transpose()?;
        if let Some(p) = ini.parsed("model", "ar_order")? {
            model.ar_order = p;
        }
        if let Some(q) = ini.parsed("model", "seasonal_dummies")? {
            model.seasonal_dummies = q;
        }
        if let Some(t) = ini.parsed("model", "ar_prior")? {
            model.ar_transform = t;
        }

        let mut fit = FullDataConfig::default();
        set(&ini, "fit", "chains", &mut fit.chains)?;
        set(&ini, "fit", "warmup", &mut fit.warmup)?;
        set(&ini, "fit", "draws", &mut fit.draws)?;
        set(&ini, "fit", "n_leapfrog", &mut fit.n_leapfrog)?;
        set(&ini, "fit", "target_accept", &mut fit.target_accept)?;
        set(&ini, "fit", "init_step", &mut fit.init_step)?;
        set(&ini, "fit", "seed", &mut fit.seed)?;
        set(&ini, "fit", "threads", &mut fit.threads)?;
        let fit_dir = resolve(ini.get("fit", "out").unwrap_or("fit"));

        let mut pcv = RunConfig {
            seed: fit.seed,
            ..RunConfig::default()
        };
        set(&ini, "pcv", "chains", &mut pcv.chains)?;
        set(&ini, "pcv", "iters", &mut pcv.iters)?;
        set(&ini, "pcv", "warmup", &mut pcv.warmup)?;
        if let Some(b) = ini.get("pcv", "batch_size") {
            pcv.batch = parse_batch(b)?;
        }
        set(&ini, "pcv", "blocks", &mut pcv.blocks)?;
        set(&ini, "pcv", "bench_draws", &mut pcv.bench_draws)?;
        set(&ini, "pcv", "seed", &mut pcv.seed)?;
        set(&ini, "pcv", "score", &mut pcv.score)?;
        set(&ini, "pcv", "checkpoint_every", &mut pcv.checkpoint_every)?;
        set(&ini, "pcv", "threads", &mut pcv.threads)?;
        set(&ini, "pcv", "verdict_quantile", &mut pcv.verdict_quantile)?;
        set(&ini, "pcv", "store_draws", &mut pcv.store_draws)?;
        set(&ini, "pcv", "common_random_numbers", &mut pcv.common_random_numbers)?;
        let pcv_dir = resolve(ini.get("pcv", "out").unwrap_or("pcv"));
        model.seed = pcv.seed;

        Ok(RunManifest {
            data,
            model,
            fit,
            fit_dir,
            pcv,
            pcv_dir,
        })
    }
}

fn set<T: FromStr>(ini: &Ini, section: &str, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = ini.parsed(section, key)? {
        *slot = v;
    }
    Ok(())
}

/// A selection mask written as a string of `0`/`1`, optionally separated
/// by commas.
pub fn parse_mask(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .filter(|c| *c != ',' && !c.is_whitespace())
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            other => Err(Error::Config(format!("mask {s:?}: unexpected {other:?}"))),
        })
        .collect()
}

/// A batch size: a positive integer or `auto`.
pub fn parse_batch(s: &str) -> Result<BatchSize> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(BatchSize::Auto);
    }
    match s.parse::<usize>() {
        Ok(b) if b > 0 => Ok(BatchSize::Fixed(b)),
        _ => Err(Error::Config(format!("batch size {s:?} is not a positive integer or auto"))),
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn parse_opt(field: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::Csv {
        row,
        column: column.into(),
        message: format!("not a number: {field:?}"),
    })
}

pub const PROGRESSIVE_HEADER: &str = "iteration,delta_hat,mcse,epistemic_se,prob_a_better,ess,rhat_max";

/// One row per snapshot; absent values are empty fields.
pub fn write_progressive_csv<W: Write>(snapshots: &[Snapshot], mut w: W) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{PROGRESSIVE_HEADER}").expect("write to string");
    for s in snapshots {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.iteration,
            fmt_real(s.delta_hat),
            fmt_opt(s.mcse),
            fmt_opt(s.epistemic_se),
            fmt_opt(s.prob_a_better),
            fmt_opt(s.ess),
            fmt_opt(s.rhat_max)
        )
        .expect("write to string");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_progressive_csv<R: Read>(r: R) -> Result<Vec<Snapshot>> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != PROGRESSIVE_HEADER {
        return Err(Error::Csv {
            row: 1,
            column: "<header>".into(),
            message: format!("expected {PROGRESSIVE_HEADER:?}"),
        });
    }
    let columns: Vec<&str> = PROGRESSIVE_HEADER.split(',').collect();
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != columns.len() {
            return Err(Error::Csv {
                row,
                column: "<record>".into(),
                message: format!("expected {} fields, got {}", columns.len(), f.len()),
            });
        }
        let iteration = f[0].parse().map_err(|_| Error::Csv {
            row,
            column: "iteration".into(),
            message: format!("not an integer: {:?}", f[0]),
        })?;
        let o = |j: usize| parse_opt(f[j], row, columns[j]);
        out.push(Snapshot {
            iteration,
            delta_hat: o(1)?.unwrap_or(f64::NAN),
            mcse: o(2)?,
            epistemic_se: o(3)?,
            prob_a_better: o(4)?,
            ess: o(5)?,
            rhat_max: o(6)?,
        });
    }
    Ok(out)
}

/// Benchmark histogram data: a comment line with the observed maximum
/// R-hat, `D` and `R`, then one row per replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkCsv {
    pub observed_rhat_max: Option<f64>,
    pub blocks: usize,
    pub replicates: usize,
    pub values: Vec<f64>,
}

pub fn write_benchmark_csv<W: Write>(bench: &BenchmarkReport, observed: Option<f64>, mut w: W) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# observed_rhat_max={},D={},R={}",
        fmt_opt(observed),
        bench.blocks,
        bench.replicates
    )
    .expect("write to string");
    writeln!(out, "replicate,rhat_max_replicate").expect("write to string");
    for (i, v) in bench.replicate_max.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_real(*v)).expect("write to string");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_benchmark_csv<R: Read>(r: R) -> Result<BenchmarkCsv> {
    let bad = |row: usize, column: &str, message: String| Error::Csv {
        row,
        column: column.into(),
        message,
    };
    let mut lines = BufReader::new(r).lines();
    let meta = lines.next().transpose()?.unwrap_or_default();
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| bad(1, "<meta>", "expected a '# ' header line".into()))?;
    let mut observed = None;
    let mut blocks = None;
    let mut replicates = None;
    for part in meta.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad(1, "<meta>", format!("bad entry {part:?}")))?;
        match k {
            "observed_rhat_max" => observed = parse_opt(v, 1, k)?,
            "D" => blocks = v.parse().ok(),
            "R" => replicates = v.parse().ok(),
            _ => return Err(bad(1, k, "unknown entry".into())),
        }
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "replicate,rhat_max_replicate" {
        return Err(bad(2, "<header>", "expected replicate,rhat_max_replicate".into()));
    }
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let row = i + 3;
        let (_, v) = line
            .split_once(',')
            .ok_or_else(|| bad(row, "<record>", "expected two fields".into()))?;
        values.push(
            v.parse()
                .map_err(|_| bad(row, "rhat_max_replicate", format!("not a number: {v:?}")))?,
        );
    }
    Ok(BenchmarkCsv {
        observed_rhat_max: observed,
        blocks: blocks.ok_or_else(|| bad(1, "D", "missing".into()))?,
        replicates: replicates.ok_or_else(|| bad(1, "R", "missing".into()))?,
        values,
    })
}

pub const FOLDS_HEADER: &str = "model,fold,score,log_score,ess,rhat,divergences";

/// Per-fold results of every model, for plotting.
pub fn write_folds_csv<W: Write>(report: &PcvReport, mut w: W) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{FOLDS_HEADER}").expect("write to string");
    for m in &report.models {
        for k in 0..m.fold_scores.len() {
            writeln!(
                out,
                "{},{k},{},{},{},{},{}",
                m.name,
                fmt_real(m.fold_scores[k]),
                fmt_real(m.fold_log_score[k]),
                fmt_opt(m.fold_ess[k]),
                fmt_opt(m.rhat[k]),
                m.divergences[k].iter().sum::<u64>()
            )
            .expect("write to string");
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ini_sections_and_errors() {
        let ini = Ini::parse("# c\n[a]\nx = 1\n y=two words \n[b]\n").unwrap();
        assert_eq!(ini.get("a", "x"), Some("1"));
        assert_eq!(ini.get("a", "y"), Some("two words"));
        assert!(ini.sections.contains_key("b"));
        assert!(Ini::parse("x = 1").is_err());
        assert!(Ini::parse("[a]\nx = 1\nx = 2").is_err());
        assert!(Ini::parse("[a\n").is_err());
        assert!(Ini::parse("[a]\nnovalue").is_err());
        let ini = Ini::parse("[a] # header\npath = x#1.csv   # trailing\nn = 3\t; why\n").unwrap();
        assert_eq!(ini.get("a", "path"), Some("x#1.csv"));
        assert_eq!(ini.get("a", "n"), Some("3"));
    }

    #[test]
    fn manifest_resolves_paths_and_defaults() {
        let text = "[data]\npath = d.csv\n[model]\nkind = grouped-reg\nmask_b = 1,1,1,0\n[pcv]\niters = 500\nbatch_size = auto\nscore = hs\n";
        let m = RunManifest::parse(text, Path::new("/tmp/run")).unwrap();
        assert_eq!(m.data.path, Path::new("/tmp/run/d.csv"));
        assert_eq!(m.fit_dir, Path::new("/tmp/run/fit"));
        assert_eq!(m.model.mask_b, Some(vec![true, true, true, false]));
        assert_eq!(m.pcv.iters, 500);
        assert_eq!(m.pcv.batch, BatchSize::Auto);
        assert_eq!(m.pcv.score, crate::scoring::Score::Hs);
        assert!(RunManifest::parse("[data]\npath=x\n[model]\nkind=grouped-reg\n[pcv]\nitres=3\n", Path::new(".")).is_err());
        assert!(RunManifest::parse("[model]\nkind=grouped-reg\n", Path::new(".")).is_err());
        assert!(RunManifest::parse("[data]\npath=x\n[model]\nkind=nope\n", Path::new(".")).is_err());
    }

    #[test]
    fn progressive_round_trip() {
        let rows = vec![
            Snapshot {
                iteration: 100,
                delta_hat: 1.25,
                mcse: Some(0.1),
                epistemic_se: Some(2.0),
                prob_a_better: Some(0.75),
                ess: None,
                rhat_max: Some(1.0123456789012345),
            },
            Snapshot {
                iteration: 200,
                delta_hat: -0.5,
                mcse: Some(f64::INFINITY),
                epistemic_se: None,
                prob_a_better: None,
                ess: Some(812.0),
                rhat_max: None,
            },
        ];
        let mut buf = Vec::new();
        write_progressive_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_progressive_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn benchmark_round_trip() {
        let b = BenchmarkReport {
            blocks: 5,
            replicates: 3,
            batch_size: 50,
            replicate_max: vec![1.001, 1.0025, 1.1],
            verdict: None,
        };
        let mut buf = Vec::new();
        write_benchmark_csv(&b, Some(1.05), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# observed_rhat_max=1.05,D=5,R=3\nreplicate,rhat_max_replicate\n0,1.001\n"));
        let back = read_benchmark_csv(&buf[..]).unwrap();
        assert_eq!(back.values, b.replicate_max);
        assert_eq!(back.observed_rhat_max, Some(1.05));
        assert_eq!((back.blocks, back.replicates), (5, 3));
    }

    #[test]
    fn masks_and_batches() {
        assert_eq!(parse_mask("1101").unwrap(), vec![true, true, false, true]);
        assert!(parse_mask("12").is_err());
        assert_eq!(parse_batch("auto").unwrap(), BatchSize::Auto);
        assert_eq!(parse_batch("25").unwrap(), BatchSize::Fixed(25));
        assert!(parse_batch("0").is_err());
    }
}
