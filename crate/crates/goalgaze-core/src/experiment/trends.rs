//! Cost/benefit trend checks over grid results: monotone hit/false-alarm
//! increase, monotone criterion decrease, and the interior sensitivity peak.

use super::{ExperimentKind, ModelKind, ResultRow};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Tolerated adjacent-pair slack when asserting monotone trends.
pub const TREND_TOLERANCE: f64 = 0.02;
pub const TREND_MAX_VIOLATIONS: usize = 1;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaMeans {
    pub alpha: f64,
    pub hit_rate: f64,
    pub fa_rate: f64,
    pub dprime: f64,
    pub criterion: f64,
    pub n_targets: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrendReport {
    pub experiment: ExperimentKind,
    pub model_kind: ModelKind,
    /// Across-target means per alpha, ascending.
    pub means: Vec<AlphaMeans>,
    pub hit_non_decreasing: bool,
    pub fa_non_decreasing: bool,
    pub criterion_non_increasing: bool,
    /// Best interior-alpha mean d' strictly exceeds d' at both endpoints.
    pub dprime_interior_peak: bool,
}

/// Non-decreasing check allowing up to `max_violations` adjacent decreases
/// of magnitude at most `tol` each.
pub fn monotone_non_decreasing(values: &[f64], tol: f64, max_violations: usize) -> bool {
    let mut violations = 0;
    for pair in values.windows(2) {
        let drop = pair[0] - pair[1];
        if drop > 0.0 {
            if drop > tol {
                return false;
            }
            violations += 1;
        }
    }
    violations <= max_violations
}

pub fn monotone_non_increasing(values: &[f64], tol: f64, max_violations: usize) -> bool {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    monotone_non_decreasing(&negated, tol, max_violations)
}

/// True when some interior value strictly exceeds both endpoint values.
pub fn interior_peak(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let first = values[0];
    let last = values[values.len() - 1];
    values[1..values.len() - 1]
        .iter()
        .any(|&v| v > first && v > last)
}

/// Across-target means per alpha for one (experiment, model kind), from
/// rows with status "ok" only.
pub fn alpha_means(
    rows: &[ResultRow],
    experiment: ExperimentKind,
    model_kind: ModelKind,
) -> Result<Vec<AlphaMeans>> {
    let mut by_alpha: BTreeMap<u64, (f64, Vec<&ResultRow>)> = BTreeMap::new();
    for row in rows {
        if row.experiment == experiment && row.model_kind == model_kind && row.status == "ok" {
            by_alpha
                .entry(row.alpha.to_bits())
                .or_insert((row.alpha, Vec::new()))
                .1
                .push(row);
        }
    }
    if by_alpha.is_empty() {
        return Err(Error::input(format!(
            "no ok rows for {experiment} / {model_kind}"
        )));
    }
    let mut means: Vec<AlphaMeans> = by_alpha
        .values()
        .map(|(alpha, group)| {
            let n = group.len() as f64;
            AlphaMeans {
                alpha: *alpha,
                hit_rate: group.iter().map(|r| r.hit_rate).sum::<f64>() / n,
                fa_rate: group.iter().map(|r| r.fa_rate).sum::<f64>() / n,
                dprime: group.iter().map(|r| r.dprime).sum::<f64>() / n,
                criterion: group.iter().map(|r| r.criterion).sum::<f64>() / n,
                n_targets: group.len(),
            }
        })
        .collect();
    means.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
    Ok(means)
}

/// Full trend verdicts for one experiment at the pinned tolerances.
pub fn trend_report(
    rows: &[ResultRow],
    experiment: ExperimentKind,
    model_kind: ModelKind,
) -> Result<TrendReport> {
    let means = alpha_means(rows, experiment, model_kind)?;
    let hits: Vec<f64> = means.iter().map(|m| m.hit_rate).collect();
    let fas: Vec<f64> = means.iter().map(|m| m.fa_rate).collect();
    let criteria: Vec<f64> = means.iter().map(|m| m.criterion).collect();
    let dprimes: Vec<f64> = means.iter().map(|m| m.dprime).collect();
    Ok(TrendReport {
        experiment,
        model_kind,
        hit_non_decreasing: monotone_non_decreasing(&hits, TREND_TOLERANCE, TREND_MAX_VIOLATIONS),
        fa_non_decreasing: monotone_non_decreasing(&fas, TREND_TOLERANCE, TREND_MAX_VIOLATIONS),
        criterion_non_increasing: monotone_non_increasing(
            &criteria,
            TREND_TOLERANCE,
            TREND_MAX_VIOLATIONS,
        ),
        dprime_interior_peak: interior_peak(&dprimes),
        means,
    })
}
