//! Signal-detection scoring: top-k hit/false-alarm counting, d' and
//! criterion under the equal-variance Gaussian convention, with a
//! deterministic half-count correction for extreme rates.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ground truth for one evaluation image: a single class, or the two
/// component classes of a blended image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truth {
    Single(u32),
    Pair(u32, u32),
}

impl Truth {
    pub fn contains(&self, class: u32) -> bool {
        match *self {
            Truth::Single(c) => c == class,
            Truth::Pair(a, b) => a == class || b == class,
        }
    }
}

/// Per-condition signal-detection report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdtReport {
    pub hits: usize,
    pub misses: usize,
    pub fas: usize,
    pub crs: usize,
    pub hit_rate: f64,
    pub fa_rate: f64,
    pub dprime: f64,
    pub criterion: f64,
    pub k: usize,
    pub correction_applied: bool,
}

/// Raw hit/miss/false-alarm/correct-rejection counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub hits: usize,
    pub misses: usize,
    pub fas: usize,
    pub crs: usize,
}

/// Count hits, misses, false alarms, and correct rejections of a target
/// class over top-k prediction lists. An image counts as target-present
/// when any of its ground-truth labels equals the target.
pub fn score_topk(predictions: &[Vec<usize>], truths: &[Truth], target: u32) -> Result<Counts> {
    if predictions.len() != truths.len() {
        return Err(Error::input(format!(
            "{} prediction lists vs {} truth records",
            predictions.len(),
            truths.len()
        )));
    }
    let mut c = Counts::default();
    for (topk, truth) in predictions.iter().zip(truths) {
        let present = truth.contains(target);
        let predicted = topk.iter().any(|&p| p as u32 == target);
        match (present, predicted) {
            (true, true) => c.hits += 1,
            (true, false) => c.misses += 1,
            (false, true) => c.fas += 1,
            (false, false) => c.crs += 1,
        }
    }
    Ok(c)
}

/// Inverse standard-normal CDF: rational approximation refined by one
/// Newton step against an erfc-based CDF. Absolute error below 1e-9.
pub fn inv_norm_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("inv_norm_cdf needs p in (0,1), got {p}")));
    }
    let z = acklam(p);
    // One Newton step: z -= (Phi(z) - p) / phi(z)
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = norm_cdf(z);
    Ok(z - (cdf - p) / pdf)
}

/// Standard normal CDF via erfc.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Acklam's rational approximation to the inverse normal CDF.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// d' and criterion from raw counts. Rates of exactly 0 or 1 are replaced
/// by 1/(2n) or 1 - 1/(2n) (half-count rule) before the z-transform.
/// Returns (d', criterion, correction_applied).
pub fn dprime_criterion(hits: usize, misses: usize, fas: usize, crs: usize) -> Result<(f64, f64, bool)> {
    let n_present = hits + misses;
    let n_absent = fas + crs;
    if n_present == 0 || n_absent == 0 {
        return Err(Error::input(format!(
            "need both present ({n_present}) and absent ({n_absent}) trials"
        )));
    }
    let (h, h_corr) = corrected_rate(hits, n_present);
    let (f, f_corr) = corrected_rate(fas, n_absent);
    let zh = inv_norm_cdf(h)?;
    let zf = inv_norm_cdf(f)?;
    Ok((zh - zf, -(zh + zf) / 2.0, h_corr || f_corr))
}

/// Half-count correction; rates strictly inside (0,1) are never altered.
pub fn corrected_rate(count: usize, n: usize) -> (f64, bool) {
    if count == 0 {
        (1.0 / (2.0 * n as f64), true)
    } else if count == n {
        (1.0 - 1.0 / (2.0 * n as f64), true)
    } else {
        (count as f64 / n as f64, false)
    }
}

/// Full report from counts.
pub fn report(counts: Counts, k: usize) -> Result<SdtReport> {
    let (dprime, criterion, correction_applied) =
        dprime_criterion(counts.hits, counts.misses, counts.fas, counts.crs)?;
    Ok(SdtReport {
        hits: counts.hits,
        misses: counts.misses,
        fas: counts.fas,
        crs: counts.crs,
        hit_rate: counts.hits as f64 / (counts.hits + counts.misses) as f64,
        fa_rate: counts.fas as f64 / (counts.fas + counts.crs) as f64,
        dprime,
        criterion,
        k,
        correction_applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Oracle normal CDF: Simpson quadrature of the density from -12 to z.
    /// Independent of the erfc-based implementation path.
    fn quadrature_cdf(z: f64) -> f64 {
        let lo = -12.0f64;
        if z <= lo {
            return 0.0;
        }
        let n = 4000; // even
        let h = (z - lo) / n as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(lo) + pdf(z);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    /// Oracle inverse: bisection on the quadrature CDF.
    fn bisect_inv(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if quadrature_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inv_norm_cdf_at_half_is_zero() {
        assert!(inv_norm_cdf(0.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn inv_norm_cdf_matches_bisection_oracle() {
        assert!((inv_norm_cdf(0.975).unwrap() - 1.959964).abs() < 1e-5);
        for &p in &[0.001, 0.01, 0.1, 0.25, 0.6, 0.84, 0.99, 0.9995] {
            let got = inv_norm_cdf(p).unwrap();
            let want = bisect_inv(p);
            assert!((got - want).abs() < 1e-7, "p={p}: got {got}, oracle {want}");
        }
    }

    #[test]
    fn inv_norm_cdf_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let p: f64 = rng.gen_range(1e-9..1.0 - 1e-9);
            let a = inv_norm_cdf(p).unwrap();
            let b = inv_norm_cdf(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-9, "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn inv_norm_cdf_rejects_out_of_domain() {
        assert!(inv_norm_cdf(0.0).is_err());
        assert!(inv_norm_cdf(1.0).is_err());
        assert!(inv_norm_cdf(-0.5).is_err());
        assert!(inv_norm_cdf(f64::NAN).is_err());
    }

    #[test]
    fn equal_rates_give_zero_dprime() {
        let (d, _, _) = dprime_criterion(42, 8, 42, 8).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn textbook_rates_give_known_dprime_and_zero_criterion() {
        // H=0.84, F=0.16 with large n so no correction fires
        let (d, c, corrected) = dprime_criterion(8400, 1600, 1600, 8400).unwrap();
        assert!(!corrected);
        assert!((d - 1.9891).abs() < 1e-3, "d'={d}");
        assert!(c.abs() < 1e-9, "c={c}");
    }

    #[test]
    fn half_count_rule_caps_perfect_rates() {
        let (h, corrected) = corrected_rate(10, 10);
        assert!(corrected);
        assert!((h - 0.95).abs() < 1e-12);
        let (z, corrected) = corrected_rate(0, 10);
        assert!(corrected);
        assert!((z - 0.05).abs() < 1e-12);
        let (mid, corrected) = corrected_rate(3, 10);
        assert!(!corrected);
        assert!((mid - 0.3).abs() < 1e-12);
    }

    #[test]
    fn score_topk_counts_the_four_outcomes() {
        let preds = vec![vec![1, 2, 3], vec![4, 5, 6]];
        let truths = vec![Truth::Single(2), Truth::Single(9)];
        let c = score_topk(&preds, &truths, 2).unwrap();
        assert_eq!(c, Counts { hits: 1, misses: 0, fas: 0, crs: 1 });
    }

    #[test]
    fn blended_pair_containing_target_is_present() {
        let preds = vec![vec![7, 2, 0]];
        let truths = vec![Truth::Pair(2, 5)];
        let c = score_topk(&preds, &truths, 2).unwrap();
        assert_eq!(c.hits, 1);
        // same pair, target not predicted: a miss, not a false alarm
        let c = score_topk(&[vec![7, 3, 0]], &truths, 2).unwrap();
        assert_eq!(c, Counts { hits: 0, misses: 1, fas: 0, crs: 0 });
    }

    #[test]
    fn score_topk_matches_direct_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let target = 3u32;
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for i in 0..20 {
            let topk: Vec<usize> = (0..5).map(|_| rng.gen_range(0..10)).collect();
            let truth = if i % 2 == 0 {
                Truth::Single(rng.gen_range(0..10))
            } else {
                Truth::Pair(rng.gen_range(0..10), rng.gen_range(0..10))
            };
            preds.push(topk);
            truths.push(truth);
        }
        let got = score_topk(&preds, &truths, target).unwrap();
        let mut want = Counts::default();
        for (p, t) in preds.iter().zip(&truths) {
            let present = t.contains(target);
            let predicted = p.contains(&(target as usize));
            if present && predicted {
                want.hits += 1;
            } else if present {
                want.misses += 1;
            } else if predicted {
                want.fas += 1;
            } else {
                want.crs += 1;
            }
        }
        assert_eq!(got, want);
        assert_eq!(got.hits + got.misses + got.fas + got.crs, 20);
    }

    #[test]
    fn score_topk_rejects_length_mismatch() {
        assert!(score_topk(&[vec![0]], &[], 0).is_err());
    }

    #[test]
    fn shift_and_symmetry_properties_hold_on_random_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..1000 {
            let n: usize = rng.gen_range(5..200);
            let hits = rng.gen_range(0..=n);
            let fas = rng.gen_range(0..=n);
            let (d, c, _) = dprime_criterion(hits, n - hits, fas, n - fas).unwrap();

            // symmetry: complementing both rates (relabeling yes/no responses,
            // so hits swap with misses and fas with crs) negates both statistics
            let (ds, cs, _) = dprime_criterion(n - hits, hits, n - fas, fas).unwrap();
            assert!((d + ds).abs() < 1e-9);
            assert!((c + cs).abs() < 1e-9);

            // shift: converting one miss into a hit raises d', lowers criterion
            if hits < n {
                let (d2, c2, _) = dprime_criterion(hits + 1, n - hits - 1, fas, n - fas).unwrap();
                assert!(d2 > d, "hits {hits}->{} n={n}: d' {d} -> {d2}", hits + 1);
                assert!(c2 < c);
            }
        }
    }

    #[test]
    fn dprime_requires_both_sides() {
        assert!(dprime_criterion(0, 0, 1, 1).is_err());
        assert!(dprime_criterion(1, 1, 0, 0).is_err());
    }

    #[test]
    fn report_assembles_rates_and_flags() {
        let r = report(Counts { hits: 9, misses: 1, fas: 2, crs: 8 }, 5).unwrap();
        assert!((r.hit_rate - 0.9).abs() < 1e-12);
        assert!((r.fa_rate - 0.2).abs() < 1e-12);
        assert!(!r.correction_applied);
        assert_eq!(r.k, 5);
        let extreme = report(Counts { hits: 10, misses: 0, fas: 2, crs: 8 }, 5).unwrap();
        assert!(extreme.correction_applied);
    }
}
