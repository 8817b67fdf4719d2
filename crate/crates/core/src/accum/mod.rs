//! Constant-memory online accumulators.
//!
//! Nothing here grows with chain length: each chain keeps a fixed number of
//! running sums (log-space sums, batch means, and `D` shuffle blocks).

mod batch;
mod chain;
mod logspace;
mod shuffle;
mod welford;

pub use batch::{
    batch_means_variance, limiting_variance, log_batch_variance_ratio, BatchMeans, BatchSize,
    LogBatchMeans,
};
pub use chain::{AccumulatorDump, ChainAccumulator, HsSums};
pub use logspace::{log_add_exp, log_sum_exp, LogSum};
pub use shuffle::{CenteredSums, ShuffleBlocks};
pub use welford::{Welford, WelfordVec};
