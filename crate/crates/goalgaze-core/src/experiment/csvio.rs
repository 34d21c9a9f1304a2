//! The pinned results CSV schema.

use super::{ExperimentKind, ModelKind, ResultRow};
use crate::error::{Error, Result};
use std::path::Path;

pub const RESULTS_HEADER: &str = "target,alpha,experiment,model_kind,hits,misses,fas,crs,hit_rate,fa_rate,dprime,criterion,weight_variance,zero_fraction,epochs,seed,status";

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != RESULTS_HEADER {
        return Err(Error::Format {
            offset: 0,
            msg: format!("unexpected results header: {headers}"),
        });
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentKind::Standard => write!(f, "standard"),
            ExperimentKind::Blended => write!(f, "blended"),
            ExperimentKind::Hard => write!(f, "hard"),
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ExperimentKind::Standard),
            "blended" => Ok(ExperimentKind::Blended),
            "hard" => Ok(ExperimentKind::Hard),
            other => Err(Error::config(format!("unknown experiment kind {other}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Attention => write!(f, "attention"),
            ModelKind::HeadRetrain => write!(f, "head-retrain"),
            ModelKind::Control => write!(f, "control"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                target: 3,
                alpha: 0.5,
                experiment: ExperimentKind::Standard,
                model_kind: ModelKind::Attention,
                hits: 40,
                misses: 10,
                fas: 12,
                crs: 38,
                hit_rate: 0.8,
                fa_rate: 0.24,
                dprime: 1.548,
                criterion: -0.067,
                weight_variance: 0.031,
                zero_fraction: 0.125,
                epochs: 14,
                seed: 991,
                status: "ok".into(),
            },
            ResultRow {
                target: 4,
                alpha: 1.0,
                experiment: ExperimentKind::Hard,
                model_kind: ModelKind::HeadRetrain,
                hits: 0,
                misses: 0,
                fas: 0,
                crs: 0,
                hit_rate: f64::NAN,
                fa_rate: f64::NAN,
                dprime: f64::NAN,
                criterion: f64::NAN,
                weight_variance: f64::NAN,
                zero_fraction: f64::NAN,
                epochs: 0,
                seed: 992,
                status: "excluded:insufficient-hard-images".into(),
            },
        ]
    }

    #[test]
    fn header_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_rows(&path, &sample_rows()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
        assert!(text.lines().nth(1).unwrap().starts_with("3,0.5,standard,attention,40,10,12,38,"));
        assert!(text.lines().nth(2).unwrap().contains(",hard,head-retrain,"));
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_rows(&p1, &sample_rows()).unwrap();
        let rows = read_rows(&p1).unwrap();
        write_rows(&p2, &rows).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn reader_rejects_foreign_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_rows(&path).is_err());
    }
}
