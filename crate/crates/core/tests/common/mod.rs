//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use pcv_core::data::Dataset;
use pcv_core::folds::{make_logo_scheme, FoldAssignment, FoldMasks};
use pcv_core::model::Model;
use pcv_core::models::simulate::simulate_grouped_regression;
use pcv_core::models::{grouped_regression, HierGaussian};
use pcv_core::rng::{Purpose, StreamKey};
use pcv_core::scoring::Score;
use rand::RngCore;
use rand_distr::{Distribution, Normal};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Two-pass `log(mean(exp(x)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// `(W, B, R-hat)` from stored equal-length chains, straight from the
/// textbook definitions.
pub fn rhat_two_pass(chains: &[Vec<f64>]) -> (f64, f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b = n * var(&means);
    (w, b, (((n - 1.0) / n * w + b / n) / w).sqrt())
}

/// Batch-means estimate of the limiting variance of `exp(draws)` relative
/// to the squared grand mean, pooled over chains; trailing partial batches
/// are dropped.
pub fn batch_ratio_two_pass(chains: &[Vec<f64>], b: usize) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().map(|x| x.exp()).collect();
    let f = mean(&all);
    let mut sq = 0.0;
    let mut a = 0usize;
    for c in chains {
        for batch in c.chunks_exact(b) {
            let bm = mean(&batch.iter().map(|x| x.exp()).collect::<Vec<_>>());
            sq += (bm - f).powi(2);
            a += 1;
        }
    }
    b as f64 * sq / (a as f64 - 1.0) / (f * f)
}

/// Naive sample variance of `exp(draws)` over `f^2`.
pub fn naive_ratio_two_pass(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().map(|x| x.exp()).collect();
    let f = mean(&all);
    var(&all) / (f * f)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Standard normal distribution function via `erfc`.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `y_i ~ N(mu, sigma^2)` with known `sigma` and `mu ~ N(0, tau^2)`. The
/// fold posterior and predictive are available in closed form.
pub struct NormalMean {
    pub y: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
    pub folds: FoldAssignment,
    masks: FoldMasks,
    pub all_scores: bool,
    /// Added to every log predictive density; leaves HS untouched.
    pub log_offset: f64,
}

impl NormalMean {
    pub fn new(y: Vec<f64>, sigma: f64, tau: f64, folds: FoldAssignment) -> Self {
        let masks = FoldMasks::new(&folds);
        NormalMean {
            y,
            sigma,
            tau,
            folds,
            masks,
            all_scores: false,
            log_offset: 0.0,
        }
    }

    /// Simulated data split into `k` contiguous folds.
    pub fn simulated(n: usize, k: usize, seed: u64) -> Self {
        let mut rng = StreamKey::new(seed, Purpose::Simulate).rng(0);
        let d = Normal::new(0.7, 1.0).unwrap();
        let y: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let folds = pcv_core::folds::make_time_block_scheme(n, k).unwrap();
        NormalMean::new(y, 1.0, 3.0, folds)
    }

    /// Exact fold posterior `(mean, var)` of `mu`.
    pub fn posterior(&self, fold: usize) -> (f64, f64) {
        let w = self.masks.train(fold);
        let n: f64 = w.iter().sum();
        let s: f64 = w.iter().zip(&self.y).map(|(a, b)| a * b).sum();
        let prec = 1.0 / (self.tau * self.tau) + n / (self.sigma * self.sigma);
        (s / (self.sigma * self.sigma) / prec, 1.0 / prec)
    }
}

impl Model for NormalMean {
    fn name(&self) -> &str {
        "normal-mean"
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    fn log_prior(&self, p: &[f64]) -> f64 {
        -0.5 * (p[0] / self.tau).powi(2) - self.tau.ln() - HALF_LN_2PI
    }

    fn log_joint(&self, p: &[f64], fold: usize) -> f64 {
        let mut g = [0.0];
        self.log_joint_grad(p, fold, &mut g)
    }

    fn log_joint_grad(&self, p: &[f64], fold: usize, grad: &mut [f64]) -> f64 {
        let mu = p[0];
        let s2 = self.sigma * self.sigma;
        let mut lp = self.log_prior(p);
        grad[0] = -mu / (self.tau * self.tau);
        for (w, y) in self.masks.train(fold).iter().zip(&self.y) {
            lp += w * (-0.5 * (y - mu).powi(2) / s2 - self.sigma.ln() - HALF_LN_2PI);
            grad[0] += w * (y - mu) / s2;
        }
        lp
    }

    fn log_pred(&self, p: &[f64], fold: usize) -> f64 {
        let test = self.masks.test(fold);
        if test.is_empty() {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        let lp: f64 = test
            .iter()
            .map(|&i| -0.5 * (self.y[i] - p[0]).powi(2) / s2 - self.sigma.ln() - HALF_LN_2PI)
            .sum();
        lp + self.log_offset
    }

    fn pointwise_log_lik(&self, p: &[f64]) -> Vec<f64> {
        let s2 = self.sigma * self.sigma;
        self.y
            .iter()
            .map(|y| -0.5 * (y - p[0]).powi(2) / s2 - self.sigma.ln() - HALF_LN_2PI)
            .collect()
    }

    fn test_values(&self, fold: usize) -> Vec<f64> {
        self.masks.test(fold).iter().map(|&i| self.y[i]).collect()
    }

    fn supports(&self, score: Score) -> bool {
        self.all_scores || score == Score::LogS
    }

    fn pred_derivs(&self, p: &[f64], fold: usize) -> Option<Vec<(f64, f64)>> {
        let s2 = self.sigma * self.sigma;
        Some(
            self.test_values(fold)
                .iter()
                .map(|y| (-(y - p[0]) / s2, -1.0 / s2))
                .collect(),
        )
    }

    fn pred_sample(&self, p: &[f64], fold: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let d = Normal::new(p[0], self.sigma).unwrap();
        Some(self.masks.test(fold).iter().map(|_| d.sample(rng)).collect())
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![Normal::new(0.0, self.tau).unwrap().sample(rng)]
    }
}

/// The grouped-regression example: `J` groups of `N_j` rows with LOGO
/// folds; A uses all four covariates and B drops the last.
pub fn example1(j: usize, nj: usize, seed: u64) -> (Dataset, HierGaussian, HierGaussian) {
    let mut rng = StreamKey::new(seed, Purpose::Simulate).rng(0);
    let (ds, _) = simulate_grouped_regression(j, nj, true, &mut rng).unwrap();
    let family = grouped_regression(&ds, make_logo_scheme(&ds).unwrap()).unwrap();
    let a = family.with_selection("full", vec![true; 4]).unwrap();
    let b = family.with_selection("reduced", vec![true, true, true, false]).unwrap();
    (ds, a, b)
}
