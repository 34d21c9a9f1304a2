//! Per-epoch subsampling: every target-class example plus a fresh seeded
//! draw of ceil(fraction * n_c) examples from each non-target class.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns the included indices, sorted ascending. The draw changes with
/// `epoch_seed`; target-class examples are always all included.
pub fn subsample_epoch(
    labels: &[u32],
    n_classes: usize,
    target: &[u32],
    fraction: f64,
    epoch_seed: u64,
) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("fraction {fraction} outside (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok((0..labels.len()).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut included = Vec::new();
    for class in 0..n_classes as u32 {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if target.contains(&class) {
            included.extend(idx);
        } else {
            let take = ((fraction * idx.len() as f64).ceil() as usize).min(idx.len());
            idx.shuffle(&mut rng);
            included.extend_from_slice(&idx[..take]);
        }
    }
    included.sort_unstable();
    Ok(included)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_10x10() -> Vec<u32> {
        (0..100).map(|i| (i / 10) as u32).collect()
    }

    #[test]
    fn fraction_one_includes_everything() {
        let labels = labels_10x10();
        let idx = subsample_epoch(&labels, 10, &[3], 1.0, 42).unwrap();
        assert_eq!(idx, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn ten_percent_of_ten_classes_keeps_nineteen() {
        let labels = labels_10x10();
        let idx = subsample_epoch(&labels, 10, &[3], 0.1, 42).unwrap();
        // 10 target images + ceil(0.1*10)=1 from each of 9 non-target classes
        assert_eq!(idx.len(), 19);
        let targets = idx.iter().filter(|&&i| labels[i] == 3).count();
        assert_eq!(targets, 10);
        for c in 0..10u32 {
            if c != 3 {
                assert_eq!(idx.iter().filter(|&&i| labels[i] == c).count(), 1);
            }
        }
    }

    #[test]
    fn distinct_epoch_seeds_give_distinct_draws() {
        let labels = labels_10x10();
        let mut distinct = 0;
        for s in 0..100u64 {
            let a = subsample_epoch(&labels, 10, &[0], 0.1, s).unwrap();
            let b = subsample_epoch(&labels, 10, &[0], 0.1, s + 1).unwrap();
            if a != b {
                distinct += 1;
            }
        }
        // collision chance per pair is ~(1/10)^9; 100/100 distinct expected
        assert!(distinct >= 99, "only {distinct}/100 adjacent seed pairs differed");
    }

    #[test]
    fn same_seed_reproduces_the_draw() {
        let labels = labels_10x10();
        let a = subsample_epoch(&labels, 10, &[5], 0.3, 7).unwrap();
        let b = subsample_epoch(&labels, 10, &[5], 0.3, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_fraction() {
        let labels = labels_10x10();
        assert!(subsample_epoch(&labels, 10, &[0], 0.0, 1).is_err());
        assert!(subsample_epoch(&labels, 10, &[0], 1.5, 1).is_err());
    }

    #[test]
    fn draws_without_replacement() {
        let labels = labels_10x10();
        let idx = subsample_epoch(&labels, 10, &[0], 0.5, 9).unwrap();
        let mut sorted = idx.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), idx.len());
    }
}
