//! Blended images: pixelwise 50/50 alpha blends of two images from
//! distinct classes, carrying both labels as ground truth.

use super::{Dataset, IMG_CHANNELS, IMG_LEN, IMG_SIDE};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// out = 0.5 a + 0.5 b, elementwise. Commutative; preserves [0,1].
pub fn blend(a: &[f32], b: &[f32]) -> Result<Vec<f32>> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("blend: {} vs {} pixels", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| 0.5 * x + 0.5 * y).collect())
}

/// Blended evaluation images with their unordered component-class pairs.
#[derive(Clone, Debug)]
pub struct BlendedSet {
    pub images: Tensor<f32>,
    pub label_pairs: Vec<(u32, u32)>,
}

/// Sidecar provenance persisted next to blended record files.
#[derive(Serialize, Deserialize)]
pub struct BlendSidecar {
    pub target: u32,
    pub seed: u64,
    pub label_pairs: Vec<(u32, u32)>,
}

impl BlendedSet {
    pub fn len(&self) -> usize {
        self.label_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_pairs.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images.data()[i * IMG_LEN..(i + 1) * IMG_LEN]
    }
}

/// Build the blended evaluation set for one target class: `n_pairs` images
/// with the target as one component and `n_pairs` images whose two distinct
/// component classes are both non-target. Seeded and reproducible.
pub fn make_blended_set(
    test: &Dataset,
    target: u32,
    n_pairs: usize,
    seed: u64,
) -> Result<BlendedSet> {
    if n_pairs == 0 {
        return Err(Error::config("need at least one blended pair"));
    }
    let n_classes = test.n_classes() as u32;
    if target >= n_classes {
        return Err(Error::index(format!("target {target} out of range for {n_classes} classes")));
    }
    let per_class: Vec<Vec<usize>> =
        (0..n_classes).map(|c| test.indices_of_class(c)).collect();
    if per_class[target as usize].is_empty() {
        return Err(Error::config(format!("target class {target} missing from the test split")));
    }
    let populated: Vec<u32> = (0..n_classes)
        .filter(|&c| c != target && !per_class[c as usize].is_empty())
        .collect();
    if populated.len() < 2 {
        return Err(Error::config(
            "need at least two populated non-target classes to build blended pairs",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[target as u64, 0xb1e2d]));
    let mut data = Vec::with_capacity(2 * n_pairs * IMG_LEN);
    let mut label_pairs = Vec::with_capacity(2 * n_pairs);

    // target-present blends
    for _ in 0..n_pairs {
        let ti = *per_class[target as usize].choose(&mut rng).unwrap();
        let other = *populated.choose(&mut rng).unwrap();
        let oi = *per_class[other as usize].choose(&mut rng).unwrap();
        data.extend(blend(test.image(ti), test.image(oi))?);
        label_pairs.push((target, other));
    }
    // target-absent blends from two distinct non-target classes
    for _ in 0..n_pairs {
        let a = *populated.choose(&mut rng).unwrap();
        let b = loop {
            let c = *populated.choose(&mut rng).unwrap();
            if c != a {
                break c;
            }
        };
        let ai = *per_class[a as usize].choose(&mut rng).unwrap();
        let bi = *per_class[b as usize].choose(&mut rng).unwrap();
        data.extend(blend(test.image(ai), test.image(bi))?);
        label_pairs.push((a, b));
    }

    Ok(BlendedSet {
        images: Tensor::new(vec![2 * n_pairs, IMG_CHANNELS, IMG_SIDE, IMG_SIDE], data)?,
        label_pairs,
    })
}

impl BlendedSet {
    /// Persist as corpus records (label byte = first component class) plus
    /// a JSON sidecar carrying the full label pairs.
    pub fn save(&self, record_path: &std::path::Path, target: u32, seed: u64) -> Result<()> {
        let ds = Dataset::new(
            self.images.clone(),
            self.label_pairs.iter().map(|&(a, _)| a).collect(),
            (0..=self.label_pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0))
                .map(|c| format!("class_{c}"))
                .collect(),
            super::Split::Test,
        )?;
        super::corpus::save_corpus(record_path, &ds)?;
        let sidecar = BlendSidecar { target, seed, label_pairs: self.label_pairs.clone() };
        let json_path = record_path.with_extension("json");
        serde_json::to_writer_pretty(std::fs::File::create(json_path)?, &sidecar)?;
        Ok(())
    }
}
