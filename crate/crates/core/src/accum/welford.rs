//! Centered running sums for means and (co)variances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar running sums of `x - c` and `(x - c)^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: u64,
    pub c: f64,
    pub ax: f64,
    pub axx: f64,
}

impl Welford {
    pub fn new(c: f64) -> Self {
        Welford {
            count: 0,
            c,
            ax: 0.0,
            axx: 0.0,
        }
    }

    pub fn update(&mut self, x: f64) {
        let d = x - self.c;
        self.ax += d;
        self.axx += d * d;
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        self.ax / self.count as f64 + self.c
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::VarianceUndefined { count: self.count });
        }
        let n = self.count as f64;
        Ok(((self.axx - self.ax * self.ax / n) / (n - 1.0)).max(0.0))
    }

    /// Folds `other` into `self`, re-centering it on `self.c` if needed.
    pub fn merge(&mut self, other: &Welford) {
        let shift = other.c - self.c;
        let n = other.count as f64;
        self.ax += other.ax + n * shift;
        self.axx += other.axx + 2.0 * shift * other.ax + n * shift * shift;
        self.count += other.count;
    }
}

/// Vector running sums with a centered outer-product matrix (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfordVec {
    pub count: u64,
    pub c: Vec<f64>,
    pub ax: Vec<f64>,
    pub axx: Vec<f64>,
}

impl WelfordVec {
    pub fn new(c: Vec<f64>) -> Self {
        let d = c.len();
        WelfordVec {
            count: 0,
            c,
            ax: vec![0.0; d],
            axx: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        for i in 0..d {
            let di = x[i] - self.c[i];
            self.ax[i] += di;
            for j in 0..d {
                self.axx[i * d + j] += di * (x[j] - self.c[j]);
            }
        }
        self.count += 1;
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.ax.iter().zip(&self.c).map(|(a, c)| a / n + c).collect()
    }

    /// Unbiased sample covariance, row-major `d x d`.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::VarianceUndefined { count: self.count });
        }
        let n = self.count as f64;
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (self.axx[i * d + j] - self.ax[i] * self.ax[j] / n) / (n - 1.0);
            }
        }
        Ok(out)
    }

    pub fn merge(&mut self, other: &WelfordVec) {
        let d = self.dim();
        assert_eq!(d, other.dim(), "merging accumulators of different dimension");
        let n = other.count as f64;
        let shift: Vec<f64> = (0..d).map(|i| other.c[i] - self.c[i]).collect();
        for i in 0..d {
            for j in 0..d {
                self.axx[i * d + j] += other.axx[i * d + j]
                    + shift[i] * other.ax[j]
                    + shift[j] * other.ax[i]
                    + n * shift[i] * shift[j];
            }
        }
        for i in 0..d {
            self.ax[i] += other.ax[i] + n * shift[i];
        }
        self.count += other.count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn textbook() {
        let mut w = Welford::new(0.0);
        for x in [1.0, 2.0, 3.0] {
            w.update(x);
        }
        assert_eq!(w.mean(), 2.0);
        assert_eq!(w.variance().unwrap(), 1.0);
    }

    #[test]
    fn large_offset_with_centering() {
        let mut w = Welford::new(1e9);
        for x in [1e9 + 1.0, 1e9 + 2.0, 1e9 + 3.0] {
            w.update(x);
        }
        assert_eq!(w.mean(), 1e9 + 2.0);
        assert!((w.variance().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_stream_has_zero_variance() {
        let mut w = Welford::new(0.3);
        for _ in 0..10 {
            w.update(7.25);
        }
        assert_eq!(w.variance().unwrap(), 0.0);
    }

    #[test]
    fn too_few_for_variance() {
        let mut w = Welford::new(0.0);
        assert!(matches!(w.variance(), Err(Error::VarianceUndefined { count: 0 })));
        w.update(1.0);
        assert!(w.variance().is_err());
    }

    #[test]
    fn vector_covariance_matches_two_pass() {
        let xs = [[1.0, 2.0], [2.0, 1.0], [4.0, 5.0], [0.5, -1.0]];
        let mut w = WelfordVec::new(vec![1.0, 1.0]);
        for x in &xs {
            w.update(x);
        }
        let cov = w.covariance().unwrap();
        let n = xs.len() as f64;
        let m: Vec<f64> = (0..2).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        for i in 0..2 {
            for j in 0..2 {
                let c = xs.iter().map(|x| (x[i] - m[i]) * (x[j] - m[j])).sum::<f64>() / (n - 1.0);
                assert!((cov[i * 2 + j] - c).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..500), c in -10f64..10.0) {
            let mut w = Welford::new(c);
            for &x in &xs { w.update(x); }
            let (m, v) = two_pass(&xs);
            prop_assert!((w.mean() - m).abs() <= 1e-10 * m.abs().max(1.0));
            prop_assert!((w.variance().unwrap() - v).abs() <= 1e-9 * v.max(1.0));
        }

        #[test]
        fn merge_equals_concatenation(
            a in prop::collection::vec(-50f64..50.0, 0..100),
            b in prop::collection::vec(-50f64..50.0, 0..100),
            ca in -5f64..5.0, cb in -5f64..5.0,
        ) {
            let mut wa = Welford::new(ca);
            a.iter().for_each(|&x| wa.update(x));
            let mut wb = Welford::new(cb);
            b.iter().for_each(|&x| wb.update(x));
            let mut whole = Welford::new(ca);
            a.iter().chain(&b).for_each(|&x| whole.update(x));
            wa.merge(&wb);
            prop_assert_eq!(wa.count, whole.count);
            prop_assert!((wa.ax - whole.ax).abs() < 1e-9);
            prop_assert!((wa.axx - whole.axx).abs() < 1e-7 * whole.axx.max(1.0));
        }

        #[test]
        fn vector_merge_equals_concatenation(
            a in prop::collection::vec(prop::array::uniform3(-20f64..20.0), 0..50),
            b in prop::collection::vec(prop::array::uniform3(-20f64..20.0), 0..50),
        ) {
            let mut wa = WelfordVec::new(vec![0.5, -1.0, 2.0]);
            a.iter().for_each(|x| wa.update(x));
            let mut wb = WelfordVec::new(vec![1.0, 0.0, -3.0]);
            b.iter().for_each(|x| wb.update(x));
            let mut whole = WelfordVec::new(vec![0.5, -1.0, 2.0]);
            a.iter().chain(&b).for_each(|x| whole.update(x));
            wa.merge(&wb);
            for (x, y) in wa.axx.iter().zip(&whole.axx) {
                prop_assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
            }
        }
    }
}
