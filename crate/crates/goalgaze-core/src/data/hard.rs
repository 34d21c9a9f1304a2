//! Hard-set mining: pool images whose true class is absent from the frozen
//! base model's top-k predictions. The control model's top-k hit rate on
//! the mined set is zero by construction.

use super::augment::{make_batch, ChannelStats};
use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::{topk, Network};
use serde::{Deserialize, Serialize};

const EVAL_BATCH: usize = 64;

/// Sidecar provenance persisted next to mined record files.
#[derive(Serialize, Deserialize)]
pub struct HardSidecar {
    pub k: usize,
    pub pool_size: usize,
    pub source_indices: Vec<usize>,
}

/// Select the subset of `pool` that the base model misses in its top-k.
/// Returns the mined dataset and the pool indices it came from. An empty
/// result is reported via Ok(None), not an error.
pub fn mine_hard_set(
    base: &Network<f32>,
    pool: &Dataset,
    k: usize,
) -> Result<Option<(Dataset, Vec<usize>)>> {
    if base.attention.is_some() {
        return Err(Error::config(
            "hard mining runs on the frozen base model; remove the attention layer first",
        ));
    }
    let stats = base
        .norm
        .map(ChannelStats::from_pair)
        .ok_or_else(|| Error::config("base checkpoint lacks normalization stats"))?;
    let mut missed = Vec::new();
    let all: Vec<usize> = (0..pool.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let batch = make_batch(pool, chunk, Some(&stats), None)?;
        let logits = base.logits(&batch)?;
        let preds = topk(&logits, k)?;
        for (&i, pred) in chunk.iter().zip(&preds) {
            if !pred.contains(&(pool.labels[i] as usize)) {
                missed.push(i);
            }
        }
    }
    if missed.is_empty() {
        return Ok(None);
    }
    let ds = pool.subset(&missed, Split::Test)?;
    Ok(Some((ds, missed)))
}
