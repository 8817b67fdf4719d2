//! Sums of densities kept as logarithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log(exp(a) + exp(b))` with `exp(-inf) = 0`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(x)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m.is_infinite() || m.is_nan() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the running sum of values and of squared values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSum {
    #[serde(with = "crate::serde_ext::real")]
    pub ux: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub ux2: f64,
    pub count: u64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            ux: f64::NEG_INFINITY,
            ux2: f64::NEG_INFINITY,
            count: 0,
        }
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `exp(log_value)`. Rejects `+inf` and NaN, leaving the state
    /// untouched.
    pub fn update(&mut self, log_value: f64) -> Result<()> {
        if log_value.is_nan() || log_value == f64::INFINITY {
            return Err(Error::NumericFault(format!(
                "log value {log_value} cannot be accumulated"
            )));
        }
        self.ux = log_add_exp(self.ux, log_value);
        self.ux2 = log_add_exp(self.ux2, 2.0 * log_value);
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &LogSum) {
        self.ux = log_add_exp(self.ux, other.ux);
        self.ux2 = log_add_exp(self.ux2, other.ux2);
        self.count += other.count;
    }

    /// Log of the mean of the accumulated values.
    pub fn log_mean(&self) -> f64 {
        self.ux - (self.count as f64).ln()
    }
}
