//! Weight-distribution statistics across attention intensities: variance,
//! zero fraction, and Spearman rank correlation between adjacent
//! intensities.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Weights at or below this are counted as turned off; projection produces
/// exact zeros but accumulation error is possible.
pub const ZERO_EPS: f32 = 1e-6;

/// Spearman rank correlation with average ranks for ties. Returns None when
/// either input has zero rank variance (correlation undefined).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("spearman: {} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::config("spearman needs at least 2 values"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("spearman over non-finite values".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    Ok(pearson(&rx, &ry))
}

/// Ranks 1..=n; tied values share the mean of their rank range.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &idx[i..=j] {
            ranks[slot] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaWeightStats {
    pub alpha: f64,
    pub variance: f64,
    pub zero_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightStatsReport {
    pub per_alpha: Vec<AlphaWeightStats>,
    /// Spearman rho between weight vectors at adjacent alphas, ascending.
    pub adjacent_spearman: Vec<Option<f64>>,
}

/// Per-alpha variance and zero fraction of one target's attention weights,
/// plus rank correlations between adjacent intensities. Alphas must be
/// strictly ascending and all weight vectors the same length.
pub fn weight_stats(weights_by_alpha: &[(f64, Vec<f32>)]) -> Result<WeightStatsReport> {
    if weights_by_alpha.is_empty() {
        return Err(Error::config("weight stats over an empty map"));
    }
    let len = weights_by_alpha[0].1.len();
    for window in weights_by_alpha.windows(2) {
        if window[1].0 <= window[0].0 {
            return Err(Error::config("alphas must be strictly ascending"));
        }
    }
    for (alpha, w) in weights_by_alpha {
        if w.len() != len {
            return Err(Error::dim(format!(
                "weight vector at alpha {alpha} has {} entries, expected {len}",
                w.len()
            )));
        }
    }
    let per_alpha = weights_by_alpha
        .iter()
        .map(|(alpha, w)| {
            let n = w.len() as f64;
            let mean = w.iter().map(|&v| v as f64).sum::<f64>() / n;
            let variance = w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            let zero_fraction = w.iter().filter(|&&v| v <= ZERO_EPS).count() as f64 / n;
            AlphaWeightStats { alpha: *alpha, variance, zero_fraction }
        })
        .collect();
    let adjacent_spearman = weights_by_alpha
        .windows(2)
        .map(|pair| {
            let a: Vec<f64> = pair[0].1.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = pair[1].1.iter().map(|&v| v as f64).collect();
            spearman(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightStatsReport { per_alpha, adjacent_spearman })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_gives_rho_one_and_reversal_minus_one() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1.7 - 3.0).collect();
        assert_eq!(spearman(&x, &x).unwrap(), Some(1.0));
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap().unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_is_undefined() {
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![5.0, 5.0, 5.0];
        assert_eq!(spearman(&x, &y).unwrap(), None);
    }

    #[test]
    fn ties_use_mean_ranks() {
        // exhaustive mean-rank oracle on a small vector with ties
        let x = vec![1.0, 2.0, 2.0, 3.0];
        let y = vec![10.0, 20.0, 30.0, 40.0];
        // ranks x: [1, 2.5, 2.5, 4]; ranks y: [1,2,3,4]
        let rx = [1.0, 2.5, 2.5, 4.0];
        let ry = [1.0, 2.0, 3.0, 4.0];
        let mx = 2.5;
        let my = 2.5;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        let want = cov / (vx * vy).sqrt();
        let got = spearman(&x, &y).unwrap().unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn monotone_transform_preserves_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
        assert!((spearman(&x, &y).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_rank_then_pearson_oracle_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        for _ in 0..20 {
            let n = 128;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let got = spearman(&x, &y).unwrap().unwrap();
            // oracle: brute-force ranks (no ties expected from continuous draws)
            let rank = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .map(|&a| 1.0 + v.iter().filter(|&&b| b < a).count() as f64)
                    .collect()
            };
            let want = pearson(&rank(&x), &rank(&y)).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_rejects_mismatch_and_short_input() {
        assert!(spearman(&[1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn all_ones_weights_have_zero_variance_and_zero_fraction() {
        let report = weight_stats(&[(0.1, vec![1.0f32; 16])]).unwrap();
        assert_eq!(report.per_alpha[0].variance, 0.0);
        assert_eq!(report.per_alpha[0].zero_fraction, 0.0);
        assert!(report.adjacent_spearman.is_empty());
    }

    #[test]
    fn identical_adjacent_vectors_correlate_perfectly() {
        let w: Vec<f32> = (0..32).map(|i| i as f32 / 31.0).collect();
        let report = weight_stats(&[(0.1, w.clone()), (0.5, w)]).unwrap();
        assert_eq!(report.adjacent_spearman, vec![Some(1.0)]);
    }

    #[test]
    fn zero_fraction_counts_small_weights() {
        let report =
            weight_stats(&[(0.5, vec![0.0, 5e-7, 0.5, 1.0])]).unwrap();
        assert!((report.per_alpha[0].zero_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weight_stats_validates_order_and_lengths() {
        assert!(weight_stats(&[]).is_err());
        assert!(weight_stats(&[(0.5, vec![1.0]), (0.1, vec![1.0])]).is_err());
        assert!(weight_stats(&[(0.1, vec![1.0]), (0.5, vec![1.0, 2.0])]).is_err());
    }
}
