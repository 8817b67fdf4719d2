//! Cross-validation fold schemes and the per-fold observation masks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Assignment of every observation to exactly one of `k` test sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub test_index: Vec<usize>,
}

impl FoldAssignment {
    pub fn new(k: usize, test_index: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("fold count must be positive"));
        }
        if let Some(bad) = test_index.iter().find(|&&f| f >= k) {
            return Err(Error::invalid(format!("fold index {bad} out of range 0..{k}")));
        }
        let fa = FoldAssignment { k, test_index };
        if let Some(empty) = fa.fold_sizes().iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("fold {empty} has an empty test set")));
        }
        Ok(fa)
    }

    pub fn n_obs(&self) -> usize {
        self.test_index.len()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.test_index {
            sizes[f] += 1;
        }
        sizes
    }

    /// Observation indices in the test set of `fold`, in ascending order.
    /// The sentinel `fold == k` has an empty test set.
    pub fn test_set(&self, fold: usize) -> Vec<usize> {
        self.test_index
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f == fold).then_some(i))
            .collect()
    }

    /// Fails when some fold would leave nothing to train on.
    pub fn validate_training(&self) -> Result<()> {
        let n = self.n_obs();
        match self.fold_sizes().iter().position(|&s| s >= n) {
            Some(f) => Err(Error::invalid(format!("fold {f} has an empty training set"))),
            None => Ok(()),
        }
    }
}

/// Leave-one-out: fold `k` holds out observation `k`.
pub fn make_loo_scheme(ds: &Dataset) -> Result<FoldAssignment> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::invalid("leave-one-out needs at least two observations"));
    }
    FoldAssignment::new(n, (0..n).collect())
}

/// Leave-one-group-out: fold `k` holds out group `k`.
pub fn make_logo_scheme(ds: &Dataset) -> Result<FoldAssignment> {
    let groups = ds
        .group_id
        .as_ref()
        .ok_or_else(|| Error::invalid("leave-one-group-out requires group ids"))?;
    let j = ds.n_groups().unwrap_or(0);
    FoldAssignment::new(j, groups.clone())
}

/// Random partition into `k` folds whose sizes differ by at most one; the
/// larger folds are the lowest numbered.
pub fn make_kfold_scheme<R: Rng + ?Sized>(
    ds: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<FoldAssignment> {
    let n = ds.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("K-fold needs 2 <= K <= {n}, got {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut test_index = vec![0; n];
    for (fold, chunk) in balanced_ranges(n, k).into_iter().enumerate() {
        for &obs in &order[chunk] {
            test_index[obs] = fold;
        }
    }
    FoldAssignment::new(k, test_index)
}

/// Contiguous blocks in observation order, sizes differing by at most one.
pub fn make_time_block_scheme(n_obs: usize, k: usize) -> Result<FoldAssignment> {
    if k < 2 || k > n_obs {
        return Err(Error::invalid(format!(
            "time-block folds need 2 <= K <= {n_obs}, got {k}"
        )));
    }
    let mut test_index = vec![0; n_obs];
    for (fold, range) in balanced_ranges(n_obs, k).into_iter().enumerate() {
        for slot in &mut test_index[range] {
            *slot = fold;
        }
    }
    FoldAssignment::new(k, test_index)
}

fn balanced_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Per-fold training weights (0 or 1) and test members, with one extra
/// sentinel row `k` covering the full dataset as training data.
#[derive(Clone, Debug)]
pub struct FoldMasks {
    k: usize,
    train: Vec<Vec<f64>>,
    test: Vec<Vec<usize>>,
}

impl FoldMasks {
    pub fn new(folds: &FoldAssignment) -> Self {
        let n = folds.n_obs();
        let mut train = Vec::with_capacity(folds.k + 1);
        let mut test = Vec::with_capacity(folds.k + 1);
        for fold in 0..folds.k {
            train.push(
                folds
                    .test_index
                    .iter()
                    .map(|&f| if f == fold { 0.0 } else { 1.0 })
                    .collect(),
            );
            test.push(folds.test_set(fold));
        }
        train.push(vec![1.0; n]);
        test.push(Vec::new());
        FoldMasks {
            k: folds.k,
            train,
            test,
        }
    }

    /// Single sentinel fold: everything is training data.
    pub fn full_only(n: usize) -> Self {
        FoldMasks {
            k: 0,
            train: vec![vec![1.0; n]],
            test: vec![Vec::new()],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sentinel(&self) -> usize {
        self.k
    }

    /// Training weights for `fold` (0..=k).
    pub fn train(&self, fold: usize) -> &[f64] {
        &self.train[fold]
    }

    pub fn test(&self, fold: usize) -> &[usize] {
        &self.test[fold]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use proptest::prelude::*;

    fn plain(n: usize) -> Dataset {
        Dataset::new(
            (0..n).map(|i| i as f64).collect(),
            vec![vec![]; n],
            vec![],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn loo_small() {
        let f = make_loo_scheme(&plain(5)).unwrap();
        assert_eq!(f.k, 5);
        assert_eq!(f.test_index, vec![0, 1, 2, 3, 4]);
        assert!(make_loo_scheme(&plain(1)).is_err());
    }

    #[test]
    fn logo_uses_groups() {
        let mut ds = plain(6);
        ds.group_id = Some(vec![0, 0, 1, 1, 2, 2]);
        let f = make_logo_scheme(&ds).unwrap();
        assert_eq!(f.k, 3);
        assert_eq!(f.test_set(1), vec![2, 3]);
        assert!(make_logo_scheme(&plain(3)).is_err());
    }

    #[test]
    fn single_group_fails_training_check() {
        let mut ds = plain(3);
        ds.group_id = Some(vec![0, 0, 0]);
        let f = make_logo_scheme(&ds).unwrap();
        assert_eq!(f.k, 1);
        assert!(f.validate_training().is_err());
    }

    #[test]
    fn kfold_sizes() {
        let mut rng = StreamKey::new(1, Purpose::Folds).rng(0);
        let f = make_kfold_scheme(&plain(10), 5, &mut rng).unwrap();
        assert_eq!(f.fold_sizes(), vec![2; 5]);
        let f = make_kfold_scheme(&plain(11), 5, &mut rng).unwrap();
        assert_eq!(f.fold_sizes(), vec![3, 2, 2, 2, 2]);
        assert!(make_kfold_scheme(&plain(4), 5, &mut rng).is_err());
        assert!(make_kfold_scheme(&plain(4), 1, &mut rng).is_err());
    }

    #[test]
    fn kfold_deterministic() {
        let key = StreamKey::new(9, Purpose::Folds);
        let a = make_kfold_scheme(&plain(30), 4, &mut key.rng(0)).unwrap();
        let b = make_kfold_scheme(&plain(30), 4, &mut key.rng(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_blocks_are_contiguous() {
        let f = make_time_block_scheme(7, 3).unwrap();
        assert_eq!(f.test_index, vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn masks_have_sentinel_row() {
        let f = make_time_block_scheme(4, 2).unwrap();
        let m = FoldMasks::new(&f);
        assert_eq!(m.train(0), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(m.test(1), &[2, 3]);
        assert_eq!(m.train(m.sentinel()), &[1.0; 4]);
        assert!(m.test(m.sentinel()).is_empty());
    }

    proptest! {
        #[test]
        fn train_and_test_partition(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = make_kfold_scheme(&plain(n), k, &mut StreamKey::new(seed, Purpose::Folds).rng(0)).unwrap();
            let m = FoldMasks::new(&f);
            for fold in 0..k {
                let mut covered = vec![0u8; n];
                for (i, w) in m.train(fold).iter().enumerate() {
                    if *w == 1.0 { covered[i] += 1; }
                }
                for &i in m.test(fold) { covered[i] += 1; }
                prop_assert!(covered.iter().all(|&c| c == 1));
            }
            let sizes = f.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
