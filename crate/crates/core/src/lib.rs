//! Parallel Bayesian cross-validation with online score accumulation.
//!
//! Every fold of every model runs its own set of HMC chains. Each chain
//! folds its log-predictive draws into constant-memory accumulators, from
//! which the engine reports the CV score difference, its Monte Carlo and
//! epistemic uncertainty, and a maximum R-hat convergence check judged
//! against a block-shuffle benchmark.

pub mod accum;
pub mod data;
pub mod diagnostics;
pub mod draws;
pub mod engine;
pub mod error;
pub mod folds;
pub mod io;
pub mod hmc;
pub mod model;
pub mod models;
pub mod rng;
pub mod scoring;
pub mod serde_ext;

pub use error::{Error, Result};
