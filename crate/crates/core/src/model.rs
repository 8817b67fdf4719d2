//! The model abstraction shared by the sampler and the CV engine.
//!
//! Every fold-dependent quantity takes a `fold` argument in `0..=K`; the
//! sentinel `fold == K` trains on the full dataset and has no test set.

use rand::RngCore;

use crate::folds::FoldAssignment;
use crate::scoring::Score;

/// A differentiable log density on unconstrained parameters.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density and writes its gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// A Bayesian model with masked fold likelihoods.
///
/// Implementations must be pure functions of their arguments so any number
/// of chains can evaluate them concurrently.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn folds(&self) -> &FoldAssignment;

    fn n_folds(&self) -> usize {
        self.folds().k
    }

    /// The full-data fold id.
    fn sentinel(&self) -> usize {
        self.n_folds()
    }

    /// Log prior density on the unconstrained scale, Jacobians included.
    fn log_prior(&self, params: &[f64]) -> f64;

    /// Log prior plus the log likelihood of the training observations of
    /// `fold`.
    fn log_joint(&self, params: &[f64], fold: usize) -> f64;

    /// [`Model::log_joint`] with its gradient written into `grad`.
    fn log_joint_grad(&self, params: &[f64], fold: usize, grad: &mut [f64]) -> f64;

    /// Log predictive density of the test observations of `fold` given
    /// `params`. Zero for the sentinel fold.
    fn log_pred(&self, params: &[f64], fold: usize) -> f64;

    /// Unmasked log likelihood of every observation, conditional on
    /// `params`.
    fn pointwise_log_lik(&self, params: &[f64]) -> Vec<f64>;

    /// Observed values of the test set of `fold`, in test-set order.
    fn test_values(&self, fold: usize) -> Vec<f64>;

    fn supports(&self, score: Score) -> bool {
        score == Score::LogS
    }

    /// First and second derivatives of each test observation's conditional
    /// log density with respect to that observation.
    fn pred_derivs(&self, _params: &[f64], _fold: usize) -> Option<Vec<(f64, f64)>> {
        None
    }

    /// One draw of the test observations from their conditional predictive.
    fn pred_sample(&self, _params: &[f64], _fold: usize, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    /// Conditional log density of each test observation evaluated at the
    /// supplied values instead of the observed ones.
    fn test_log_density(&self, _params: &[f64], _fold: usize, _y: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// A draw from the prior on the unconstrained scale.
    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// One fold of a model viewed as a sampling target.
pub struct FoldTarget<'a> {
    pub model: &'a dyn Model,
    pub fold: usize,
}

impl LogDensity for FoldTarget<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.model.log_joint_grad(x, self.fold, grad)
    }
}

/// Compares the analytic gradient with central differences of step `step`.
///
/// Coordinate `i` passes when `|g_i - fd_i| <= tol * max(1, |fd_i|) + 4 eps |f| / step`;
/// the second term is the rounding floor of the difference quotient, which
/// only matters when the log density itself is huge. Returns the worst
/// coordinate as `(index, analytic, finite difference)` on failure.
pub fn gradient_check(
    model: &dyn Model,
    params: &[f64],
    fold: usize,
    step: f64,
    tol: f64,
) -> std::result::Result<(), (usize, f64, f64)> {
    let mut grad = vec![0.0; model.dim()];
    model.log_joint_grad(params, fold, &mut grad);
    let mut x = params.to_vec();
    let mut worst: Option<(f64, usize, f64)> = None;
    for i in 0..params.len() {
        x[i] = params[i] + step;
        let up = model.log_joint(&x, fold);
        x[i] = params[i] - step;
        let down = model.log_joint(&x, fold);
        x[i] = params[i];
        let fd = (up - down) / (2.0 * step);
        let floor = 4.0 * f64::EPSILON * up.abs().max(down.abs()) / step;
        let excess = (grad[i] - fd).abs() - tol * fd.abs().max(1.0) - floor;
        if excess > 0.0 && worst.map_or(true, |w| excess > w.0) {
            worst = Some((excess, i, fd));
        }
    }
    match worst {
        None => Ok(()),
        Some((_, i, fd)) => Err((i, grad[i], fd)),
    }
}

/// Derivatives of the test observations' log densities by central
/// differences of [`Model::test_log_density`]. A debugging fallback for
/// [`Model::pred_derivs`].
pub fn fd_pred_derivs(model: &dyn Model, params: &[f64], fold: usize, h: f64) -> Option<Vec<(f64, f64)>> {
    let y = model.test_values(fold);
    let mid = model.test_log_density(params, fold, &y)?;
    let up: Vec<f64> = y.iter().map(|v| v + h).collect();
    let down: Vec<f64> = y.iter().map(|v| v - h).collect();
    let fu = model.test_log_density(params, fold, &up)?;
    let fd = model.test_log_density(params, fold, &down)?;
    Some(
        (0..y.len())
            .map(|i| {
                (
                    (fu[i] - fd[i]) / (2.0 * h),
                    (fu[i] - 2.0 * mid[i] + fd[i]) / (h * h),
                )
            })
            .collect(),
    )
}
