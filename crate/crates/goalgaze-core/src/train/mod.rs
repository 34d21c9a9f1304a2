//! The intensity-weighted training objective, epoch subsampling, Adam,
//! early stopping, and the two training modes (attention layer vs
//! final-layer retraining).

pub mod adam;
pub mod loss;
pub mod sample;
pub mod stop;
pub mod trainer;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use loss::{example_weight, weighted_epoch_loss};
pub use sample::subsample_epoch;
pub use stop::early_stop;
pub use trainer::{pretrain, retrain_head, top1_accuracy, train_attention, PretrainConfig};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Hyperparameters of one training job.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Attention intensity in [1/N, 1].
    pub alpha: f64,
    /// Target class set; a single class in all acceptance runs.
    pub target: Vec<u32>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Fraction of each non-target class sampled per epoch. 1.0 disables
    /// subsampling (desk default; the corpus is small).
    #[serde(default = "default_fraction")]
    pub nontarget_fraction: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Stop when relative validation-loss improvement falls below this at
    /// `stop_consecutive` consecutive checks.
    #[serde(default = "default_rel")]
    pub stop_rel_improve: f64,
    #[serde(default = "default_consecutive")]
    pub stop_consecutive: usize,
    /// Validation checks run every this many epochs.
    #[serde(default = "default_stride")]
    pub check_stride_epochs: usize,
    pub seed: u64,
    #[serde(default = "default_augment")]
    pub augment: bool,
}

fn default_lr() -> f64 {
    3e-4
}
fn default_batch() -> usize {
    16
}
fn default_fraction() -> f64 {
    1.0
}
fn default_max_epochs() -> usize {
    200
}
fn default_rel() -> f64 {
    1e-3
}
fn default_consecutive() -> usize {
    2
}
fn default_stride() -> usize {
    2
}
fn default_augment() -> bool {
    true
}

impl TrainConfig {
    pub fn new(alpha: f64, target: Vec<u32>, seed: u64) -> Self {
        TrainConfig {
            alpha,
            target,
            lr: default_lr(),
            batch_size: default_batch(),
            nontarget_fraction: default_fraction(),
            max_epochs: default_max_epochs(),
            stop_rel_improve: default_rel(),
            stop_consecutive: default_consecutive(),
            check_stride_epochs: default_stride(),
            seed,
            augment: default_augment(),
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let n = n_classes as f64;
        if !(self.alpha >= 1.0 / n && self.alpha <= 1.0) {
            return Err(Error::config(format!(
                "alpha {} outside [1/N, 1] = [{}, 1] for N={n_classes}",
                self.alpha,
                1.0 / n
            )));
        }
        if self.target.is_empty() || self.target.len() >= n_classes {
            return Err(Error::config(format!(
                "target set size {} must satisfy 1 <= |T| < N={n_classes}",
                self.target.len()
            )));
        }
        if let Some(&bad) = self.target.iter().find(|&&t| t as usize >= n_classes) {
            return Err(Error::index(format!("target class {bad} out of range for N={n_classes}")));
        }
        if !(self.nontarget_fraction > 0.0 && self.nontarget_fraction <= 1.0) {
            return Err(Error::config(format!(
                "nontarget_fraction {} outside (0, 1]",
                self.nontarget_fraction
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.check_stride_epochs == 0 {
            return Err(Error::config("batch size, max epochs, and check stride must be positive"));
        }
        if self.lr <= 0.0 || self.stop_rel_improve < 0.0 || self.stop_consecutive == 0 {
            return Err(Error::config("invalid optimizer or stopping settings"));
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop { at_epoch: usize },
    MaxEpochs,
}

/// Loss trajectory of one training job.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean weighted training loss per epoch, index 0 = epoch 1.
    pub train_loss: Vec<f64>,
    /// (epoch, validation loss) at every early-stop check.
    pub val_checks: Vec<(usize, f64)>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl TrainHistory {
    /// CSV rows `epoch,train_loss,val_loss`; val_loss is empty between checks.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for (i, &tl) in self.train_loss.iter().enumerate() {
            let epoch = i + 1;
            match self.val_checks.iter().find(|(e, _)| *e == epoch) {
                Some((_, vl)) => writeln!(w, "{epoch},{tl},{vl}")?,
                None => writeln!(w, "{epoch},{tl},")?,
            }
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: &mut W) -> Result<()> {
        let summary = serde_json::json!({
            "stop_reason": self.stop_reason,
            "epochs": self.epochs_run,
            "wall_time_s": self.wall_time_s,
            "seed": self.seed,
        });
        serde_json::to_writer_pretty(w, &summary)?;
        Ok(())
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("history.csv"))?);
        self.write_csv(&mut csv)?;
        let mut json = std::io::BufWriter::new(std::fs::File::create(dir.join("summary.json"))?);
        self.write_summary(&mut json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_the_documented_values() {
        let cfg = TrainConfig::new(0.5, vec![3], 7);
        assert_eq!(cfg.lr, 3e-4);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.nontarget_fraction, 1.0);
        assert_eq!(cfg.max_epochs, 200);
        assert_eq!(cfg.stop_rel_improve, 1e-3);
        assert_eq!(cfg.stop_consecutive, 2);
        assert_eq!(cfg.check_stride_epochs, 2);
    }

    #[test]
    fn config_rejects_alpha_below_uniform() {
        let cfg = TrainConfig::new(0.05, vec![1], 0);
        assert!(cfg.validate(10).is_err());
        let cfg = TrainConfig::new(0.1, vec![1], 0);
        assert!(cfg.validate(10).is_ok());
        let cfg = TrainConfig::new(1.01, vec![1], 0);
        assert!(cfg.validate(10).is_err());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let json = r#"{"alpha": 0.5, "target": [2], "seed": 9}"#;
        let cfg: TrainConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.target, vec![2]);
        let back: TrainConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn history_csv_leaves_unchecked_epochs_blank() {
        let h = TrainHistory {
            train_loss: vec![1.0, 0.8, 0.7],
            val_checks: vec![(2, 0.9)],
            epochs_run: 3,
            stop_reason: StopReason::MaxEpochs,
            wall_time_s: 0.5,
            seed: 1,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss");
        assert_eq!(lines[1], "1,1,");
        assert_eq!(lines[2], "2,0.8,0.9");
        assert_eq!(lines[3], "3,0.7,");
    }
}
