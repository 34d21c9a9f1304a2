//! Attention vs final-layer-retraining comparison at one intensity.

use super::{ExperimentKind, ModelKind, ResultRow};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BaselineDelta {
    pub target: u32,
    pub experiment: ExperimentKind,
    pub dprime_attention: f64,
    pub dprime_head: f64,
    /// d'_attention - d'_head
    pub delta_dprime: f64,
    pub criterion_attention: f64,
    pub criterion_head: f64,
    pub delta_criterion: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub alpha: f64,
    pub per_target: Vec<BaselineDelta>,
    pub mean_delta_dprime: BTreeMap<String, f64>,
    pub mean_delta_criterion: BTreeMap<String, f64>,
    /// Whether the mean d' advantage of attention is positive, per
    /// experiment; reported, not gated.
    pub attention_dprime_higher: BTreeMap<String, bool>,
}

/// Pair attention rows with head-retrain rows at `alpha` and tabulate the
/// per-target and mean d'/criterion deltas per experiment. Rows whose
/// status is not "ok" are skipped when both sides are missing, but a
/// one-sided gap is an input error.
pub fn compare_baseline(rows: &[ResultRow], alpha: f64) -> Result<BaselineComparison> {
    let key = |r: &ResultRow| (r.target, r.experiment);
    let mut attn: BTreeMap<(u32, ExperimentKind), &ResultRow> = BTreeMap::new();
    let mut head: BTreeMap<(u32, ExperimentKind), &ResultRow> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.alpha == alpha && r.status == "ok") {
        match row.model_kind {
            ModelKind::Attention => {
                attn.insert(key(row), row);
            }
            ModelKind::HeadRetrain => {
                head.insert(key(row), row);
            }
            ModelKind::Control => {}
        }
    }
    if attn.is_empty() || head.is_empty() {
        return Err(Error::input(format!(
            "need both attention and head-retrain rows at alpha={alpha}; found {} and {}",
            attn.len(),
            head.len()
        )));
    }
    let mut gaps = Vec::new();
    for k in attn.keys() {
        if !head.contains_key(k) {
            gaps.push(format!("head-retrain missing for target {} {}", k.0, k.1));
        }
    }
    for k in head.keys() {
        if !attn.contains_key(k) {
            gaps.push(format!("attention missing for target {} {}", k.0, k.1));
        }
    }
    if !gaps.is_empty() {
        return Err(Error::input(format!("incomplete pairs at alpha={alpha}: {}", gaps.join("; "))));
    }

    let mut per_target = Vec::new();
    for (k, a) in &attn {
        let h = head[k];
        per_target.push(BaselineDelta {
            target: k.0,
            experiment: k.1,
            dprime_attention: a.dprime,
            dprime_head: h.dprime,
            delta_dprime: a.dprime - h.dprime,
            criterion_attention: a.criterion,
            criterion_head: h.criterion,
            delta_criterion: a.criterion - h.criterion,
        });
    }
    per_target.sort_by_key(|d| (d.experiment as usize, d.target));

    let mut mean_delta_dprime = BTreeMap::new();
    let mut mean_delta_criterion = BTreeMap::new();
    let mut attention_dprime_higher = BTreeMap::new();
    for exp in [ExperimentKind::Standard, ExperimentKind::Blended, ExperimentKind::Hard] {
        let group: Vec<&BaselineDelta> =
            per_target.iter().filter(|d| d.experiment == exp).collect();
        if group.is_empty() {
            continue;
        }
        let n = group.len() as f64;
        let dd = group.iter().map(|d| d.delta_dprime).sum::<f64>() / n;
        let dc = group.iter().map(|d| d.delta_criterion).sum::<f64>() / n;
        mean_delta_dprime.insert(exp.to_string(), dd);
        mean_delta_criterion.insert(exp.to_string(), dc);
        attention_dprime_higher.insert(exp.to_string(), dd > 0.0);
    }
    Ok(BaselineComparison {
        alpha,
        per_target,
        mean_delta_dprime,
        mean_delta_criterion,
        attention_dprime_higher,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(target: u32, kind: ModelKind, exp: ExperimentKind, d: f64, c: f64) -> ResultRow {
        ResultRow {
            target,
            alpha: 0.5,
            experiment: exp,
            model_kind: kind,
            hits: 0,
            misses: 0,
            fas: 0,
            crs: 0,
            hit_rate: 0.0,
            fa_rate: 0.0,
            dprime: d,
            criterion: c,
            weight_variance: 0.0,
            zero_fraction: 0.0,
            epochs: 1,
            seed: 0,
            status: "ok".into(),
        }
    }

    #[test]
    fn identical_rows_give_zero_deltas() {
        let rows = vec![
            row(0, ModelKind::Attention, ExperimentKind::Standard, 1.5, -0.2),
            row(0, ModelKind::HeadRetrain, ExperimentKind::Standard, 1.5, -0.2),
        ];
        let cmp = compare_baseline(&rows, 0.5).unwrap();
        assert_eq!(cmp.per_target.len(), 1);
        assert_eq!(cmp.per_target[0].delta_dprime, 0.0);
        assert_eq!(cmp.per_target[0].delta_criterion, 0.0);
        assert_eq!(cmp.mean_delta_dprime["standard"], 0.0);
    }

    #[test]
    fn hand_built_rows_match_hand_arithmetic() {
        let rows = vec![
            row(0, ModelKind::Attention, ExperimentKind::Blended, 2.0, -0.5),
            row(0, ModelKind::HeadRetrain, ExperimentKind::Blended, 1.2, -0.1),
            row(1, ModelKind::Attention, ExperimentKind::Blended, 1.6, -0.4),
            row(1, ModelKind::HeadRetrain, ExperimentKind::Blended, 1.0, -0.2),
        ];
        let cmp = compare_baseline(&rows, 0.5).unwrap();
        // deltas: (0.8, -0.4) and (0.6, -0.2); means 0.7 and -0.3
        assert!((cmp.mean_delta_dprime["blended"] - 0.7).abs() < 1e-12);
        assert!((cmp.mean_delta_criterion["blended"] + 0.3).abs() < 1e-12);
        assert!(cmp.attention_dprime_higher["blended"]);
    }

    #[test]
    fn one_sided_gaps_are_input_errors_listing_the_gap() {
        let rows = vec![
            row(0, ModelKind::Attention, ExperimentKind::Standard, 1.5, -0.2),
            row(0, ModelKind::HeadRetrain, ExperimentKind::Standard, 1.2, -0.1),
            row(1, ModelKind::Attention, ExperimentKind::Standard, 1.5, -0.2),
        ];
        let err = compare_baseline(&rows, 0.5).unwrap_err();
        assert!(err.to_string().contains("target 1"));
    }

    #[test]
    fn missing_alpha_entirely_is_an_input_error() {
        let rows = vec![row(0, ModelKind::Attention, ExperimentKind::Standard, 1.0, 0.0)];
        assert!(compare_baseline(&rows, 0.25).is_err());
    }
}
