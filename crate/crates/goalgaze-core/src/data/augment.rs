//! Training-time augmentation (random horizontal flip, random crop from
//! 4-pixel zero padding) and per-channel mean/std normalization.

use super::{Dataset, IMG_CHANNELS, IMG_LEN, IMG_SIDE};
use crate::error::Result;
use crate::tensor::Tensor;
use rand::Rng;

pub const CROP_PAD: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    pub fn as_pair(&self) -> ([f64; 3], [f64; 3]) {
        (self.mean, self.std)
    }

    pub fn from_pair(pair: ([f64; 3], [f64; 3])) -> Self {
        ChannelStats { mean: pair.0, std: pair.1 }
    }
}

/// Population mean and standard deviation per channel over a dataset.
pub fn compute_channel_stats(ds: &Dataset) -> ChannelStats {
    let plane = IMG_SIDE * IMG_SIDE;
    let mut mean = [0f64; 3];
    let mut sq = [0f64; 3];
    let n = (ds.len() * plane) as f64;
    for i in 0..ds.len() {
        let img = ds.image(i);
        for c in 0..IMG_CHANNELS {
            for &v in &img[c * plane..(c + 1) * plane] {
                mean[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
    }
    let mut std = [0f64; 3];
    for c in 0..3 {
        mean[c] /= n;
        std[c] = (sq[c] / n - mean[c] * mean[c]).max(1e-12).sqrt();
    }
    ChannelStats { mean, std }
}

/// (x - mean) / std per channel over a [B,3,H,W] batch in [0,1].
pub fn normalize_batch(batch: &Tensor<f32>, stats: &ChannelStats) -> Tensor<f32> {
    let shape = batch.shape().to_vec();
    let plane: usize = shape[2] * shape[3];
    let mut out = batch.clone();
    for img in out.data_mut().chunks_mut(IMG_CHANNELS * plane) {
        for c in 0..IMG_CHANNELS {
            let m = stats.mean[c] as f32;
            let s = stats.std[c] as f32;
            for v in &mut img[c * plane..(c + 1) * plane] {
                *v = (*v - m) / s;
            }
        }
    }
    out
}

/// Random horizontal flip then a random 32x32 crop out of a zero-padded
/// 40x40 canvas. Operates in [0,1] pixel space, before normalization.
pub fn augment_image(src: &[f32], rng: &mut impl Rng) -> Vec<f32> {
    debug_assert_eq!(src.len(), IMG_LEN);
    let plane = IMG_SIDE * IMG_SIDE;
    let flip: bool = rng.gen();
    let dy = rng.gen_range(0..=2 * CROP_PAD) as isize - CROP_PAD as isize;
    let dx = rng.gen_range(0..=2 * CROP_PAD) as isize - CROP_PAD as isize;
    let mut out = vec![0f32; IMG_LEN];
    for c in 0..IMG_CHANNELS {
        for y in 0..IMG_SIDE {
            let sy = y as isize + dy;
            if sy < 0 || sy >= IMG_SIDE as isize {
                continue;
            }
            for x in 0..IMG_SIDE {
                let sx_pre = x as isize + dx;
                if sx_pre < 0 || sx_pre >= IMG_SIDE as isize {
                    continue;
                }
                let sx = if flip { IMG_SIDE - 1 - sx_pre as usize } else { sx_pre as usize };
                out[c * plane + y * IMG_SIDE + x] = src[c * plane + sy as usize * IMG_SIDE + sx];
            }
        }
    }
    out
}

/// Assemble a [B,3,32,32] batch from dataset indices, optionally augmented,
/// normalized when stats are given.
pub fn make_batch(
    ds: &Dataset,
    indices: &[usize],
    stats: Option<&ChannelStats>,
    augment_rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(indices.len() * IMG_LEN);
    match augment_rng {
        Some(rng) => {
            for &i in indices {
                data.extend(augment_image(ds.image(i), rng));
            }
        }
        None => {
            for &i in indices {
                data.extend_from_slice(ds.image(i));
            }
        }
    }
    let batch = Tensor::new(vec![indices.len(), IMG_CHANNELS, IMG_SIDE, IMG_SIDE], data)?;
    Ok(match stats {
        Some(s) => normalize_batch(&batch, s),
        None => batch,
    })
}
