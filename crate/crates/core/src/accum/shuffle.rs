//! Per-block centered sums of score draws, kept for the shuffle benchmark.

use serde::{Deserialize, Serialize};

/// Count, centered sum and centered sum of squares of one chain segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CenteredSums {
    pub n: u64,
    pub sx: f64,
    pub sxx: f64,
}

impl CenteredSums {
    pub fn add(&mut self, other: &CenteredSums) {
        self.n += other.n;
        self.sx += other.sx;
        self.sxx += other.sxx;
    }
}

/// `D` contiguous blocks of one chain's draws, each centered at `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShuffleBlocks {
    pub c: f64,
    pub y_x: Vec<f64>,
    pub y_x2: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ShuffleBlocks {
    pub fn new(d: usize, c: f64) -> Self {
        assert!(d >= 1, "at least one block is required");
        ShuffleBlocks {
            c,
            y_x: vec![0.0; d],
            y_x2: vec![0.0; d],
            counts: vec![0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.y_x.len()
    }

    /// Block holding iteration `iter` (0-based) of a chain of length `n`.
    pub fn block_index(iter: usize, n: usize, d: usize) -> usize {
        (iter * d / n).min(d - 1)
    }

    pub fn update(&mut self, draw: f64, block: usize) {
        let v = draw - self.c;
        self.y_x[block] += v;
        self.y_x2[block] += v * v;
        self.counts[block] += 1;
    }

    pub fn block(&self, d: usize) -> CenteredSums {
        CenteredSums {
            n: self.counts[d],
            sx: self.y_x[d],
            sxx: self.y_x2[d],
        }
    }

    /// Sums over all blocks, i.e. the whole chain.
    pub fn totals(&self) -> CenteredSums {
        let mut out = CenteredSums::default();
        for d in 0..self.d() {
            out.add(&self.block(d));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.y_x.iter().chain(&self.y_x2).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_is_whole_chain() {
        let mut s = ShuffleBlocks::new(1, 0.5);
        for x in [1.0, 2.0, 4.0] {
            s.update(x, 0);
        }
        let t = s.totals();
        assert_eq!(t.n, 3);
        assert!((t.sx - 5.5).abs() < 1e-15);
        assert!((t.sxx - (0.25 + 2.25 + 12.25)).abs() < 1e-15);
    }

    #[test]
    fn perfect_centering_gives_zero() {
        let mut s = ShuffleBlocks::new(3, -2.0);
        for i in 0..9 {
            s.update(-2.0, ShuffleBlocks::block_index(i, 9, 3));
        }
        assert!(s.y_x.iter().all(|&v| v == 0.0));
        assert!(s.y_x2.iter().all(|&v| v == 0.0));
        assert_eq!(s.counts, vec![3, 3, 3]);
    }

    #[test]
    fn block_index_covers_range() {
        let idx: Vec<usize> = (0..7).map(|i| ShuffleBlocks::block_index(i, 7, 3)).collect();
        assert_eq!(idx, vec![0, 0, 0, 1, 1, 2, 2]);
    }
}
