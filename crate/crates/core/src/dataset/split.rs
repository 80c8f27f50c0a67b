//! Seeded train/validation/test partitioning.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::sampler::rng_from_seed;

/// Indices into a sample list, partitioned into three disjoint lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Shuffles `0..available` with `seed` and takes the first `train`, next
/// `val` and next `test` indices.
pub fn make_split(available: usize, counts: (usize, usize, usize), seed: u64) -> Result<DatasetSplit> {
    let (train, val, test) = counts;
    let requested = train
        .checked_add(val)
        .and_then(|s| s.checked_add(test))
        .ok_or_else(|| Error::InvalidArgument("split counts overflow".into()))?;
    if requested > available {
        return Err(Error::InsufficientSamples { requested, available });
    }
    let mut order: Vec<usize> = (0..available).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order.truncate(requested);
    let test_part = order.split_off(train + val);
    let val_part = order.split_off(train);
    Ok(DatasetSplit {
        train: order,
        validation: val_part,
        test: test_part,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn three_of_three_is_permutation() {
        let s = make_split(3, (1, 1, 1), 9).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(
            make_split(100, (50, 20, 20), 4).unwrap(),
            make_split(100, (50, 20, 20), 4).unwrap()
        );
        assert_ne!(
            make_split(100, (50, 20, 20), 4).unwrap().train,
            make_split(100, (50, 20, 20), 5).unwrap().train
        );
    }

    #[test]
    fn large_split_sizes_and_disjointness() {
        let s = make_split(12_000, (5000, 3000, 3000), 1).unwrap();
        assert_eq!(s.counts(), (5000, 3000, 3000));
        let set: HashSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        assert_eq!(set.len(), 11_000);
    }

    #[test]
    fn shortfall_is_named() {
        let err = make_split(10, (5, 5, 5), 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                requested: 15,
                available: 10
            }
        ));
        assert!(err.to_string().contains("15") && err.to_string().contains("10"));
    }
}
