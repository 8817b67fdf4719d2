//! The CV report and its progressive snapshots.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::diagnostics::Verdict;
use crate::scoring::ComparisonResult;

/// Why a fold was left out of the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    /// Every chain diverged on more than half of its iterations.
    Divergent,
    /// A chain could not start from its full-data draw.
    Initialization,
    /// The fold score is not a finite number.
    NumericFault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedFold {
    pub model: usize,
    pub fold: usize,
    pub reason: FailReason,
}

/// Per-model results. Fold-indexed vectors cover every fold, including
/// excluded ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    /// Sum of the fold scores over the included folds, positively oriented.
    #[serde(with = "crate::serde_ext::real")]
    pub total: f64,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub mcse: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub epistemic_se: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub ess: Option<f64>,
    #[serde(with = "crate::serde_ext::real_vec")]
    pub fold_scores: Vec<f64>,
    /// Log score of each fold, whatever the selected score.
    #[serde(with = "crate::serde_ext::real_vec")]
    pub fold_log_score: Vec<f64>,
    pub fold_ess: Vec<Option<f64>>,
    pub rhat: Vec<Option<f64>>,
    /// Centering constant of the score draws per fold.
    #[serde(with = "crate::serde_ext::real_vec")]
    pub centering: Vec<f64>,
    /// Sampling divergences `[fold][chain]`.
    pub divergences: Vec<Vec<u64>>,
    /// Fold warm-up divergences `[fold][chain]`.
    pub warmup_divergences: Vec<Vec<u64>>,
    /// Log-predictive draws equal to `-inf`, over all folds and chains.
    pub neg_inf_draws: u64,
    /// Folds whose predictive covariance needed a ridge (DSS only).
    pub dss_ridged: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub blocks: usize,
    pub replicates: usize,
    pub batch_size: usize,
    #[serde(with = "crate::serde_ext::real_vec")]
    pub replicate_max: Vec<f64>,
    pub verdict: Option<Verdict>,
}

/// Summary at one checkpoint. With one model `delta_hat` is the model's
/// total score and `prob_a_better` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    #[serde(with = "crate::serde_ext::real")]
    pub delta_hat: f64,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub mcse: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub epistemic_se: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub prob_a_better: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub ess: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub rhat_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcvReport {
    pub config: RunConfig,
    pub batch_size: usize,
    pub models: Vec<ModelReport>,
    /// `A - B` over the folds included for both models.
    pub comparison: Option<ComparisonResult>,
    /// Aggregate ESS over all included folds of all models.
    #[serde(with = "crate::serde_ext::real_opt")]
    pub ess: Option<f64>,
    #[serde(with = "crate::serde_ext::real_opt")]
    pub rhat_max: Option<f64>,
    /// Included folds (over all models) whose R-hat is undefined.
    pub rhat_undefined: usize,
    pub failed_folds: Vec<FailedFold>,
    /// Folds left out of every total because some model failed on them.
    pub excluded_folds: Vec<usize>,
    /// Trailing draws per chain that did not fill a batch.
    pub dropped_per_chain: usize,
    pub benchmark: Option<BenchmarkReport>,
    pub snapshots: Vec<Snapshot>,
    /// Every log-predictive draw `[model][fold][chain][iteration]`, when
    /// requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stored_draws: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl PcvReport {
    /// Total divergent sampling transitions over all models, folds and chains.
    pub fn total_divergences(&self) -> u64 {
        self.models
            .iter()
            .flat_map(|m| m.divergences.iter().flatten())
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
