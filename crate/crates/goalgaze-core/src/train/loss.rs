//! The intensity-weighted cross-entropy objective: per-example weights and
//! the (optionally subsampled) epoch loss whose expectation matches the
//! full-data objective.

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{Element, Tensor};

const EVAL_BATCH: usize = 64;

/// Contribution weight of one example: alpha for target-class examples,
/// (1 - alpha) / (N - |T|) otherwise. At alpha = 1/N both branches agree
/// and every class is weighted equally; at alpha = 1 non-target classes
/// contribute nothing.
pub fn example_weight(label: u32, target: &[u32], alpha: f64, n_classes: usize) -> Result<f64> {
    let n = n_classes as f64;
    if !(alpha >= 1.0 / n && alpha <= 1.0) {
        return Err(Error::config(format!(
            "alpha {alpha} outside [1/N, 1] for N={n_classes}"
        )));
    }
    if target.is_empty() || target.len() >= n_classes {
        return Err(Error::config(format!(
            "target set size {} must satisfy 1 <= |T| < N={n_classes}",
            target.len()
        )));
    }
    if label as usize >= n_classes {
        return Err(Error::index(format!("label {label} out of range for N={n_classes}")));
    }
    Ok(if target.contains(&label) {
        alpha
    } else {
        (1.0 - alpha) / (n - target.len() as f64)
    })
}

/// Weighted epoch loss over a dataset. With `subsample = None` this is the
/// full-data objective: mean over all examples of weight * CE. With a
/// subsampled index list, non-target terms are additionally up-weighted by
/// 1/nontarget_fraction and the divisor stays the full example count, so
/// the expectation over draws equals the full-data loss.
///
/// Images must already be preprocessed the way the network expects.
pub fn weighted_epoch_loss<T: Element>(
    net: &Network<T>,
    images: &Tensor<T>,
    labels: &[u32],
    subsample: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let m_full = labels.len();
    if m_full == 0 {
        return Err(Error::config("weighted epoch loss over an empty stream"));
    }
    if images.shape()[0] != m_full {
        return Err(Error::dim(format!(
            "{} images vs {} labels",
            images.shape()[0],
            m_full
        )));
    }
    let n_classes = net.cfg.classes;
    let included: Vec<usize> = match subsample {
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::config("weighted epoch loss over an empty subsample"));
            }
            idx.to_vec()
        }
        None => (0..m_full).collect(),
    };
    let upweight = match subsample {
        Some(_) => 1.0 / cfg.nontarget_fraction,
        None => 1.0,
    };

    let row = images.row_len();
    let mut total = 0f64;
    for chunk in included.chunks(EVAL_BATCH) {
        let mut data = Vec::with_capacity(chunk.len() * row);
        let mut chunk_labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            if i >= m_full {
                return Err(Error::index(format!("subsample index {i} out of range {m_full}")));
            }
            data.extend_from_slice(&images.data()[i * row..(i + 1) * row]);
            chunk_labels.push(labels[i] as usize);
        }
        let mut shape = images.shape().to_vec();
        shape[0] = chunk.len();
        let batch = Tensor::new(shape, data)?;
        let pass = net.forward_batch(&batch)?;
        let mut graph = pass.graph;
        let ce = graph.softmax_xent(pass.logits, &chunk_labels)?;
        for (&i, &ce_i) in chunk.iter().zip(graph.value(ce).data()) {
            let w = example_weight(labels[i], &cfg.target, cfg.alpha, n_classes)?;
            let factor = if cfg.target.contains(&labels[i]) { 1.0 } else { upweight };
            total += w * factor * Element::into_f64(ce_i);
        }
    }
    Ok(total / m_full as f64)
}
