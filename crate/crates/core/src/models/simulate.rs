//! Synthetic datasets drawn from the example models' priors.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::priors::{NormalPrior, ScalePrior};
use super::seasonal::ArTransform;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Measurement days of the rat growth design.
pub const RAT_DAYS: [f64; 5] = [8.0, 15.0, 22.0, 29.0, 36.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedTruth {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
    pub sigma_y: f64,
}

/// `J` groups of `N_j` observations sharing one row of four `N(0, 10)`
/// covariates per group. With `require_effect`, the last coefficient is
/// redrawn until its magnitude is at least 1.
pub fn simulate_grouped_regression<R: Rng>(
    j: usize,
    nj: usize,
    require_effect: bool,
    rng: &mut R,
) -> Result<(Dataset, GroupedTruth)> {
    if j < 2 || nj < 1 {
        return Err(Error::invalid(format!("need J >= 2 and N_j >= 1, got J={j}, N_j={nj}")));
    }
    let p = 4;
    let xdist = Normal::new(0.0, 10f64.sqrt()).expect("valid normal");
    let xg: Vec<Vec<f64>> = (0..j).map(|_| (0..p).map(|_| xdist.sample(rng)).collect()).collect();
    let mu_alpha = NormalPrior::new(0.0, 1.0).sample(rng);
    let sigma_alpha = ScalePrior::HalfNormal { var: 10.0 }.sample_sigma(rng);
    let sigma_y = ScalePrior::HalfNormal { var: 10.0 }.sample_sigma(rng);
    let mut beta: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    while require_effect && beta[p - 1].abs() < 1.0 {
        beta[p - 1] = rng.sample(StandardNormal);
    }
    let alpha: Vec<f64> = (0..j)
        .map(|_| mu_alpha + sigma_alpha * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut y = Vec::with_capacity(j * nj);
    let mut x = Vec::with_capacity(j * nj);
    let mut group = Vec::with_capacity(j * nj);
    for g in 0..j {
        let mean = alpha[g] + xg[g].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        for _ in 0..nj {
            y.push(mean + sigma_y * rng.sample::<f64, _>(StandardNormal));
            x.push(xg[g].clone());
            group.push(g);
        }
    }
    let names = (1..=p).map(|i| format!("x{i}")).collect();
    let ds = Dataset::new(y, x, names, Some(group), None)?;
    Ok((
        ds,
        GroupedTruth {
            alpha,
            beta,
            mu_alpha,
            sigma_alpha,
            sigma_y,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatTruth {
    pub alpha: Vec<f64>,
    pub slope: Vec<f64>,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
    pub mu_slope: f64,
    pub sigma_slope: f64,
    pub sigma_y: f64,
    /// Day at which the intercepts apply.
    pub day_center: f64,
}

/// Rat-like growth curves: `J` animals weighed on [`RAT_DAYS`], with
/// per-animal intercept (at the mean day) and slope drawn from the priors.
pub fn simulate_rats<R: Rng>(j: usize, rng: &mut R) -> Result<(Dataset, RatTruth)> {
    if j < 2 {
        return Err(Error::invalid("need at least two rats"));
    }
    let p = super::rat_priors();
    let mu_alpha = p.intercept.mean.sample(rng);
    let sigma_alpha = p.intercept.scale.sample_sigma(rng);
    let mu_slope = p.slope.mean.sample(rng);
    let sigma_slope = p.slope.scale.sample_sigma(rng);
    let sigma_y = p.sigma_y.sample_sigma(rng);
    let alpha: Vec<f64> = (0..j)
        .map(|_| mu_alpha + sigma_alpha * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let slope: Vec<f64> = (0..j)
        .map(|_| mu_slope + sigma_slope * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let center = RAT_DAYS.iter().sum::<f64>() / RAT_DAYS.len() as f64;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut group = Vec::new();
    for g in 0..j {
        for &t in &RAT_DAYS {
            y.push(alpha[g] + slope[g] * (t - center) + sigma_y * rng.sample::<f64, _>(StandardNormal));
            x.push(vec![t]);
            group.push(g);
        }
    }
    let ds = Dataset::new(y, x, vec!["t".into()], Some(group), None)?;
    Ok((
        ds,
        RatTruth {
            alpha,
            slope,
            mu_alpha,
            sigma_alpha,
            mu_slope,
            sigma_slope,
            sigma_y,
            day_center: center,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadonTruth {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
    pub sigma_y: f64,
}

/// Radon-like data: `n` homes in `j` counties (at least two homes each,
/// the rest spread with random county weights) and a binary floor
/// indicator.
pub fn simulate_radon<R: Rng>(n: usize, j: usize, rng: &mut R) -> Result<(Dataset, RadonTruth)> {
    if j < 2 || n < 2 * j {
        return Err(Error::invalid(format!("need J >= 2 and at least 2J homes, got N={n}, J={j}")));
    }
    let mut counts = vec![2usize; j];
    let weights: Vec<f64> = (0..j).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..n - 2 * j {
        counts[pick.sample(rng)] += 1;
    }
    let mu_alpha = NormalPrior::new(0.0, 4.0).sample(rng);
    let sigma_alpha = ScalePrior::GammaVar { shape: 6.0, rate: 9.0 }.sample_sigma(rng);
    let beta = NormalPrior::new(0.0, 1.0).sample(rng);
    let sigma_y = ScalePrior::GammaVar { shape: 10.0, rate: 10.0 }.sample_sigma(rng);
    let alpha: Vec<f64> = (0..j)
        .map(|_| mu_alpha + sigma_alpha * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let floor = Bernoulli::new(0.5).expect("valid probability");
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    for (g, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let f = if floor.sample(rng) { 1.0 } else { 0.0 };
            y.push(alpha[g] + beta * f + sigma_y * rng.sample::<f64, _>(StandardNormal));
            x.push(vec![f]);
            group.push(g);
        }
    }
    let ds = Dataset::new(y, x, vec!["floor".into()], Some(group), None)?;
    Ok((
        ds,
        RadonTruth {
            alpha,
            beta,
            mu_alpha,
            sigma_alpha,
            sigma_y,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalTruth {
    /// Coefficients on lags `1..=p`.
    pub rho_short: Vec<f64>,
    /// Coefficients on lags `12, 24, ..., 12p`.
    pub rho_seasonal: Vec<f64>,
    /// Intercept followed by the monthly effects.
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// Series of length `t` from a seasonal AR whose coefficients are drawn
/// from the model priors (literal transform) for both lag families. When
/// the coefficient magnitudes sum to 1 or more they are rescaled to sum
/// to 0.9 so the simulated process is stationary.
pub fn simulate_seasonal_ar<R: Rng>(t: usize, p: usize, q: usize, rng: &mut R) -> Result<(Dataset, SeasonalTruth)> {
    if p == 0 || q > 11 || t <= 12 * p + q {
        return Err(Error::invalid(format!("need p >= 1, q <= 11 and T > 12p + q, got T={t}, p={p}, q={q}")));
    }
    let beta_dist = rand_distr::Beta::new(5.0, 5.0).expect("valid beta");
    let draw_rho = |rng: &mut R| -> Vec<f64> {
        (0..p)
            .map(|_| {
                let x: f64 = beta_dist.sample(rng);
                ArTransform::Literal.rho((x / (1.0 - x)).ln()).0
            })
            .collect()
    };
    let mut rho_short = draw_rho(rng);
    let mut rho_seasonal = draw_rho(rng);
    let total: f64 = rho_short.iter().chain(&rho_seasonal).map(|r| r.abs()).sum();
    if total >= 1.0 {
        let scale = 0.9 / total;
        rho_short.iter_mut().for_each(|r| *r *= scale);
        rho_seasonal.iter_mut().for_each(|r| *r *= scale);
    }
    let beta = (0..=q).map(|_| NormalPrior::new(0.0, 1.0).sample(rng)).collect();
    let sigma = ScalePrior::HalfNormal { var: 1.0 }.sample_sigma(rng);
    let truth = SeasonalTruth {
        rho_short,
        rho_seasonal,
        beta,
        sigma,
    };
    let ds = simulate_seasonal_ar_with(t, &truth, rng)?;
    Ok((ds, truth))
}

/// Series of length `t` from given coefficients, after a discarded
/// burn-in of ten years.
pub fn simulate_seasonal_ar_with<R: Rng>(t: usize, truth: &SeasonalTruth, rng: &mut R) -> Result<Dataset> {
    let q = truth.beta.len().saturating_sub(1);
    if truth.beta.is_empty() || q > 11 {
        return Err(Error::invalid("beta must hold an intercept and at most 11 monthly effects"));
    }
    let burn = 120;
    let total = t + burn;
    let mut y = vec![0.0; total];
    for s in 0..total {
        let month = s % 12;
        let mut v = truth.beta[0] + if month >= 1 && month <= q { truth.beta[month] } else { 0.0 };
        for (i, r) in truth.rho_short.iter().enumerate() {
            if s > i {
                v += r * y[s - i - 1];
            }
        }
        for (i, r) in truth.rho_seasonal.iter().enumerate() {
            let lag = 12 * (i + 1);
            if s >= lag {
                v += r * y[s - lag];
            }
        }
        y[s] = v + truth.sigma * rng.sample::<f64, _>(StandardNormal);
    }
    let series = y[burn..].to_vec();
    let time: Vec<i64> = (0..t as i64).collect();
    Dataset::new(series, vec![Vec::new(); t], Vec::new(), None, Some(time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};

    #[test]
    fn grouped_shapes() {
        let mut rng = StreamKey::new(1, Purpose::Simulate).rng(0);
        let (ds, truth) = simulate_grouped_regression(50, 5, true, &mut rng).unwrap();
        assert_eq!(ds.len(), 250);
        assert_eq!(ds.n_groups(), Some(50));
        assert!(truth.beta[3].abs() >= 1.0);
        let (ds, _) = simulate_grouped_regression(2, 1, false, &mut rng).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(simulate_grouped_regression(1, 5, false, &mut rng).is_err());
    }

    #[test]
    fn reproducible() {
        let a = simulate_grouped_regression(5, 3, true, &mut StreamKey::new(9, Purpose::Simulate).rng(0)).unwrap();
        let b = simulate_grouped_regression(5, 3, true, &mut StreamKey::new(9, Purpose::Simulate).rng(0)).unwrap();
        assert_eq!(a.0.y, b.0.y);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn radon_counties_have_two_homes() {
        let (ds, _) = simulate_radon(600, 30, &mut StreamKey::new(2, Purpose::Simulate).rng(0)).unwrap();
        assert_eq!(ds.len(), 600);
        let mut counts = vec![0; 30];
        for &g in ds.group_id.as_ref().unwrap() {
            counts[g] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 2));
    }

    #[test]
    fn seasonal_is_stationary_and_sized() {
        let (ds, truth) = simulate_seasonal_ar(420, 1, 11, &mut StreamKey::new(4, Purpose::Simulate).rng(0)).unwrap();
        assert_eq!(ds.len(), 420);
        assert_eq!(truth.beta.len(), 12);
        let total: f64 = truth.rho_short.iter().chain(&truth.rho_seasonal).map(|r| r.abs()).sum();
        assert!(total < 1.0);
        assert!(ds.y.iter().all(|v| v.is_finite() && v.abs() < 1e3));
    }
}
