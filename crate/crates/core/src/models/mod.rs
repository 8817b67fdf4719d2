//! Example models: grouped regression, rat growth curves, radon-style
//! county effects, and seasonal autoregression, with simulators and a
//! small registry for building candidate pairs from a dataset.

mod hier;
pub mod priors;
mod seasonal;
pub mod simulate;

pub use hier::{GroupEffect, HierGaussian, HierSpec};
pub use seasonal::{ArTransform, SeasonalAr, SeasonalArSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::folds::{make_kfold_scheme, make_logo_scheme, make_loo_scheme, make_time_block_scheme, FoldAssignment};
use crate::model::Model;
use crate::rng::{Purpose, StreamKey};
use priors::{NormalPrior, ScalePrior};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GroupedReg,
    Rats,
    Radon,
    SeasonalAr,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grouped-reg" => Ok(ModelKind::GroupedReg),
            "rats" => Ok(ModelKind::Rats),
            "radon" => Ok(ModelKind::Radon),
            "seasonal-ar" => Ok(ModelKind::SeasonalAr),
            other => Err(Error::invalid(format!(
                "unknown model {other:?} (expected grouped-reg, rats, radon or seasonal-ar)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::GroupedReg => "grouped-reg",
            ModelKind::Rats => "rats",
            ModelKind::Radon => "radon",
            ModelKind::SeasonalAr => "seasonal-ar",
        })
    }
}

/// Cross-validation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Logo,
    Loo,
    KFold(usize),
    TimeBlock(usize),
}

impl FromStr for Scheme {
    type Err = Error;

    /// `logo`, `loo`, `kfold:<K>` or `time-block:<K>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let k = || -> Result<usize> {
            arg.ok_or_else(|| Error::invalid(format!("scheme {name} needs a fold count, e.g. {name}:10")))?
                .parse()
                .map_err(|_| Error::invalid(format!("bad fold count in {s:?}")))
        };
        match name {
            "logo" => Ok(Scheme::Logo),
            "loo" => Ok(Scheme::Loo),
            "kfold" => Ok(Scheme::KFold(k()?)),
            "time-block" => Ok(Scheme::TimeBlock(k()?)),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Logo => f.write_str("logo"),
            Scheme::Loo => f.write_str("loo"),
            Scheme::KFold(k) => write!(f, "kfold:{k}"),
            Scheme::TimeBlock(k) => write!(f, "time-block:{k}"),
        }
    }
}

impl Scheme {
    /// Fold assignment over `n_obs` modeled observations of `ds`.
    pub fn build(self, ds: &Dataset, seed: u64) -> Result<FoldAssignment> {
        match self {
            Scheme::Logo => make_logo_scheme(ds),
            Scheme::Loo => make_loo_scheme(ds),
            Scheme::KFold(k) => make_kfold_scheme(ds, k, &mut StreamKey::new(seed, Purpose::Folds).rng(0)),
            Scheme::TimeBlock(k) => make_time_block_scheme(ds.len(), k),
        }
    }
}

/// Everything needed to build the two candidate models from a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub kind: ModelKind,
    pub scheme: Option<Scheme>,
    pub mask_a: Option<Vec<bool>>,
    pub mask_b: Option<Vec<bool>>,
    pub ar_order: usize,
    pub seasonal_dummies: usize,
    pub ar_transform: ArTransform,
    pub seed: u64,
}

impl ModelOptions {
    pub fn new(kind: ModelKind) -> Self {
        ModelOptions {
            kind,
            scheme: None,
            mask_a: None,
            mask_b: None,
            ar_order: 1,
            seasonal_dummies: 11,
            ar_transform: ArTransform::Literal,
            seed: 0,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(match self.kind {
            ModelKind::SeasonalAr => Scheme::TimeBlock(50),
            _ => Scheme::Logo,
        })
    }
}

pub(crate) struct RatPriors {
    pub intercept: GroupEffect,
    pub slope: GroupEffect,
    pub sigma_y: ScalePrior,
}

pub(crate) fn rat_priors() -> RatPriors {
    RatPriors {
        intercept: GroupEffect {
            mean: NormalPrior::new(250.0, 20.0),
            scale: ScalePrior::GammaSd { shape: 25.0, rate: 2.0 },
        },
        slope: GroupEffect {
            mean: NormalPrior::new(6.0, 2.0),
            scale: ScalePrior::GammaSd { shape: 5.0, rate: 10.0 },
        },
        sigma_y: ScalePrior::GammaSd { shape: 1.0, rate: 2.0 },
    }
}

fn groups(ds: &Dataset) -> Result<Vec<usize>> {
    ds.group_id
        .clone()
        .ok_or_else(|| Error::invalid("this model needs a group column"))
}

fn mask_or(mask: &Option<Vec<bool>>, default: Vec<bool>, p: usize) -> Result<Vec<bool>> {
    let m = mask.clone().unwrap_or(default);
    if m.len() != p {
        return Err(Error::invalid(format!("mask has {} entries, dataset has {p} covariates", m.len())));
    }
    Ok(m)
}

/// Grouped regression: centered group intercepts plus every covariate as
/// a fixed effect. The family's selection is all ones.
pub fn grouped_regression(ds: &Dataset, folds: FoldAssignment) -> Result<HierGaussian> {
    let p = ds.n_covariates();
    let spec = HierSpec {
        name: "grouped-reg".into(),
        intercept: GroupEffect {
            mean: NormalPrior::new(0.0, 1.0),
            scale: ScalePrior::HalfNormal { var: 10.0 },
        },
        slope: None,
        noncentered: false,
        beta: vec![NormalPrior::new(0.0, 1.0); p],
        selection: vec![true; p],
        sigma_y: ScalePrior::HalfNormal { var: 10.0 },
    };
    HierGaussian::new(spec, ds.y.clone(), groups(ds)?, None, ds.x.clone(), folds)
}

/// Radon-style model: non-centered county intercepts with fixed effects
/// on every covariate.
pub fn radon(ds: &Dataset, folds: FoldAssignment) -> Result<HierGaussian> {
    let p = ds.n_covariates();
    let spec = HierSpec {
        name: "radon".into(),
        intercept: GroupEffect {
            mean: NormalPrior::new(0.0, 4.0),
            scale: ScalePrior::GammaVar { shape: 6.0, rate: 9.0 },
        },
        slope: None,
        noncentered: true,
        beta: vec![NormalPrior::new(0.0, 1.0); p],
        selection: vec![true; p],
        sigma_y: ScalePrior::GammaVar { shape: 10.0, rate: 10.0 },
    };
    HierGaussian::new(spec, ds.y.clone(), groups(ds)?, None, ds.x.clone(), folds)
}

/// Rat growth models on the first covariate (measurement day, centered at
/// its mean): per-rat slopes for `M_A`, one shared slope for `M_B`.
pub fn rats_pair(ds: &Dataset, folds: FoldAssignment) -> Result<(HierGaussian, HierGaussian)> {
    if ds.n_covariates() < 1 {
        return Err(Error::invalid("rat models need a time covariate"));
    }
    let t: Vec<f64> = ds.x.iter().map(|r| r[0]).collect();
    let center = t.iter().sum::<f64>() / t.len() as f64;
    let tc: Vec<f64> = t.iter().map(|v| v - center).collect();
    let pr = rat_priors();
    let group = groups(ds)?;
    let a = HierGaussian::new(
        HierSpec {
            name: "rats-random-slope".into(),
            intercept: pr.intercept,
            slope: Some(pr.slope),
            noncentered: false,
            beta: Vec::new(),
            selection: Vec::new(),
            sigma_y: pr.sigma_y,
        },
        ds.y.clone(),
        group.clone(),
        Some(tc.clone()),
        vec![Vec::new(); ds.len()],
        folds.clone(),
    )?;
    let b = HierGaussian::new(
        HierSpec {
            name: "rats-common-slope".into(),
            intercept: pr.intercept,
            slope: None,
            noncentered: false,
            beta: vec![NormalPrior::new(6.0, 2.0)],
            selection: vec![true],
            sigma_y: pr.sigma_y,
        },
        ds.y.clone(),
        group,
        None,
        tc.iter().map(|v| vec![*v]).collect(),
        folds,
    )?;
    Ok((a, b))
}

/// Month-on-month (`lags 1..p`) and year-on-year (`lags 12..12p`) seasonal
/// autoregressions on the same modeled points `12p..T`.
pub fn seasonal_ar_pair(
    ds: &Dataset,
    p: usize,
    q: usize,
    transform: ArTransform,
    scheme: Scheme,
) -> Result<(SeasonalAr, SeasonalAr)> {
    if p == 0 {
        return Err(Error::invalid("AR order must be at least 1"));
    }
    let start = 12 * p;
    if ds.len() <= start + 1 {
        return Err(Error::invalid(format!("series of length {} is too short for order {p}", ds.len())));
    }
    let months: Vec<usize> = match &ds.time_index {
        Some(t) => t.iter().map(|v| v.rem_euclid(12) as usize).collect(),
        None => (0..ds.len()).map(|i| i % 12).collect(),
    };
    let n_eff = ds.len() - start;
    let folds = match scheme {
        Scheme::TimeBlock(k) => make_time_block_scheme(n_eff, k)?,
        Scheme::Loo => make_time_block_scheme(n_eff, n_eff)?,
        other => {
            return Err(Error::invalid(format!(
                "seasonal AR supports time-block and loo schemes, not {other}"
            )))
        }
    };
    let spec = |name: &str, lags: Vec<usize>| SeasonalArSpec {
        name: name.into(),
        lags,
        q,
        transform,
        start,
    };
    let a = SeasonalAr::new(spec("ar-monthly", (1..=p).collect()), &ds.y, &months, folds.clone())?;
    let b = SeasonalAr::new(spec("ar-annual", (1..=p).map(|i| 12 * i).collect()), &ds.y, &months, folds)?;
    Ok((a, b))
}

/// Builds the candidate pair `(M_A, M_B)` described by `opts`.
pub fn build_pair(ds: &Dataset, opts: &ModelOptions) -> Result<(Box<dyn Model>, Box<dyn Model>)> {
    let scheme = opts.scheme();
    match opts.kind {
        ModelKind::GroupedReg | ModelKind::Radon => {
            let folds = scheme.build(ds, opts.seed)?;
            let p = ds.n_covariates();
            let family = if opts.kind == ModelKind::GroupedReg {
                grouped_regression(ds, folds)?
            } else {
                radon(ds, folds)?
            };
            let mut default_b = vec![true; p];
            if let Some(last) = default_b.last_mut() {
                *last = false;
            }
            let mask_a = mask_or(&opts.mask_a, vec![true; p], p)?;
            let mask_b = mask_or(&opts.mask_b, default_b, p)?;
            let a = family.with_selection(&format!("{}-a", opts.kind), mask_a)?;
            let b = family.with_selection(&format!("{}-b", opts.kind), mask_b)?;
            Ok((Box::new(a), Box::new(b)))
        }
        ModelKind::Rats => {
            if opts.mask_a.is_some() || opts.mask_b.is_some() {
                return Err(Error::invalid("rat models do not take selection masks"));
            }
            let (a, b) = rats_pair(ds, scheme.build(ds, opts.seed)?)?;
            Ok((Box::new(a), Box::new(b)))
        }
        ModelKind::SeasonalAr => {
            let (a, b) = seasonal_ar_pair(ds, opts.ar_order, opts.seasonal_dummies, opts.ar_transform, scheme)?;
            Ok((Box::new(a), Box::new(b)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gradient_check;

    #[test]
    fn parse_round_trip() {
        for s in ["logo", "loo", "kfold:10", "time-block:50"] {
            assert_eq!(s.parse::<Scheme>().unwrap().to_string(), s);
        }
        assert!("kfold".parse::<Scheme>().is_err());
        for s in ["grouped-reg", "rats", "radon", "seasonal-ar"] {
            assert_eq!(s.parse::<ModelKind>().unwrap().to_string(), s);
        }
        assert!("nope".parse::<ModelKind>().is_err());
    }

    #[test]
    fn every_example_builds_and_has_exact_gradients() {
        let mut rng = StreamKey::new(11, Purpose::Simulate).rng(0);
        let datasets = [
            (ModelKind::GroupedReg, simulate::simulate_grouped_regression(6, 3, true, &mut rng).unwrap().0),
            (ModelKind::Rats, simulate::simulate_rats(5, &mut rng).unwrap().0),
            (ModelKind::Radon, simulate::simulate_radon(20, 5, &mut rng).unwrap().0),
            (ModelKind::SeasonalAr, simulate::simulate_seasonal_ar(80, 1, 11, &mut rng).unwrap().0),
        ];
        for (kind, ds) in datasets {
            let mut opts = ModelOptions::new(kind);
            if kind == ModelKind::SeasonalAr {
                opts.scheme = Some(Scheme::TimeBlock(4));
            }
            let (a, b) = build_pair(&ds, &opts).unwrap();
            for m in [a.as_ref(), b.as_ref()] {
                assert_eq!(m.param_names().len(), m.dim());
                for k in [0, m.n_folds() - 1, m.sentinel()] {
                    for i in 0..5 {
                        let p = m.sample_prior(&mut StreamKey::new(i, Purpose::Prior).rng(k as u64));
                        assert!(m.log_joint(&p, k).is_finite(), "{kind}");
                        let res = gradient_check(m, &p, k, 1e-5, 1e-4);
                        assert!(res.is_ok(), "{} fold {k}: {res:?}", m.name());
                    }
                }
            }
        }
    }
}
