//! Everything one (model, fold, chain) task accumulates while sampling.

use serde::{Deserialize, Serialize};

use super::batch::LogBatchMeans;
use super::logspace::LogSum;
use super::shuffle::ShuffleBlocks;
use super::welford::WelfordVec;

/// Centered per-test-observation sums of the two Hyvärinen statistics:
/// `d2 + d1^2` and `d1`, where `d1`, `d2` are the first and second
/// derivatives of the log predictive density in the observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsSums {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub count: u64,
}

impl HsSums {
    pub fn new(c1: Vec<f64>, c2: Vec<f64>) -> Self {
        assert_eq!(c1.len(), c2.len());
        let m = c1.len();
        HsSums {
            c1,
            c2,
            y1: vec![0.0; m],
            y2: vec![0.0; m],
            count: 0,
        }
    }

    pub fn update(&mut self, derivs: &[(f64, f64)]) {
        debug_assert_eq!(derivs.len(), self.y1.len());
        for (i, &(d1, d2)) in derivs.iter().enumerate() {
            self.y1[i] += d2 + d1 * d1 - self.c1[i];
            self.y2[i] += d1 - self.c2[i];
        }
        self.count += 1;
    }

    /// Adds another chain's sums; both must share centering constants.
    pub fn merge(&mut self, other: &HsSums) {
        debug_assert_eq!(self.c1, other.c1);
        for i in 0..self.y1.len() {
            self.y1[i] += other.y1[i];
            self.y2[i] += other.y2[i];
        }
        self.count += other.count;
    }

    /// Posterior means of the two statistics per test observation.
    pub fn means(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count as f64;
        let m1 = self.y1.iter().zip(&self.c1).map(|(y, c)| y / n + c).collect();
        let m2 = self.y2.iter().zip(&self.c2).map(|(y, c)| y / n + c).collect();
        (m1, m2)
    }
}

/// Online state of one chain for one fold of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainAccumulator {
    pub logsum: LogSum,
    pub batches: LogBatchMeans,
    pub blocks: ShuffleBlocks,
    pub hs: Option<HsSums>,
    pub dss: Option<WelfordVec>,
    /// Divergent transitions during the fold warm-up.
    pub warmup_divergences: u64,
    /// Divergent transitions during sampling.
    pub divergences: u64,
    /// Log-predictive draws equal to `-inf`.
    pub neg_inf: u64,
    /// Log-predictive draws that were NaN or `+inf` and could not be used.
    pub faults: u64,
    pub iterations: u64,
}

impl ChainAccumulator {
    pub fn new(b: usize, d: usize, c: f64) -> Self {
        ChainAccumulator {
            logsum: LogSum::new(),
            batches: LogBatchMeans::new(b),
            blocks: ShuffleBlocks::new(d, c),
            hs: None,
            dss: None,
            warmup_divergences: 0,
            divergences: 0,
            neg_inf: 0,
            faults: 0,
            iterations: 0,
        }
    }

    /// Records one log-predictive draw taken at sampling iteration `iter`
    /// of `n`.
    pub fn record(&mut self, log_pred: f64, iter: usize, n: usize) {
        self.iterations += 1;
        if self.logsum.update(log_pred).is_err() {
            self.faults += 1;
            return;
        }
        self.batches.update(log_pred);
        if log_pred == f64::NEG_INFINITY {
            self.neg_inf += 1;
            return;
        }
        let d = self.blocks.d();
        self.blocks
            .update(log_pred, ShuffleBlocks::block_index(iter, n, d));
    }

    /// True when the score draws support an R-hat computation.
    pub fn rhat_valid(&self) -> bool {
        self.neg_inf == 0 && self.faults == 0 && self.blocks.is_finite()
    }

    pub fn dump(&self) -> AccumulatorDump {
        AccumulatorDump {
            u_x: self.logsum.ux,
            u_x2: self.logsum.ux2,
            v_x: self.batches.vx,
            v_x2: self.batches.vx2,
            y_x: self.blocks.y_x.clone(),
            y_x2: self.blocks.y_x2.clone(),
            c: self.blocks.c,
            count: self.logsum.count,
            batches: self.batches.a as u64,
        }
    }
}

/// Flat view of the core accumulator state for external comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorDump {
    #[serde(with = "crate::serde_ext::real")]
    pub u_x: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub u_x2: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub v_x: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub v_x2: f64,
    #[serde(with = "crate::serde_ext::real_vec")]
    pub y_x: Vec<f64>,
    #[serde(with = "crate::serde_ext::real_vec")]
    pub y_x2: Vec<f64>,
    pub c: f64,
    pub count: u64,
    pub batches: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_inf_draw_invalidates_rhat_only() {
        let mut acc = ChainAccumulator::new(2, 2, 0.0);
        acc.record(-1.0, 0, 4);
        acc.record(f64::NEG_INFINITY, 1, 4);
        acc.record(-2.0, 2, 4);
        assert_eq!(acc.logsum.count, 3);
        assert_eq!(acc.neg_inf, 1);
        assert!(!acc.rhat_valid());
        assert_eq!(acc.blocks.totals().n, 2);
    }

    #[test]
    fn fault_is_counted_and_skipped() {
        let mut acc = ChainAccumulator::new(2, 1, 0.0);
        acc.record(f64::NAN, 0, 2);
        assert_eq!(acc.faults, 1);
        assert_eq!(acc.logsum.count, 0);
    }

    #[test]
    fn dump_field_names() {
        let acc = ChainAccumulator::new(2, 2, 0.5);
        let v = serde_json::to_value(acc.dump()).unwrap();
        for key in ["u_x", "u_x2", "v_x", "v_x2", "y_x", "y_x2", "c", "count", "batches"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["u_x"], "-inf");
    }
}
