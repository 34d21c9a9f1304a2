//! Dataset ingestion, synthetic corpus generation, blended-image and
//! hard-set construction, and balanced evaluation-set assembly.

pub mod augment;
pub mod blend;
pub mod corpus;
pub mod hard;
pub mod synthetic;

pub use augment::{augment_image, compute_channel_stats, normalize_batch, ChannelStats};
pub use blend::{blend, make_blended_set, BlendedSet};
pub use corpus::{load_corpus, load_corpus_dir, save_corpus, RECORD_LEN};
pub use hard::mine_hard_set;
pub use synthetic::{gen_synthetic, gen_synthetic_styled, SynthStyle};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const IMG_SIDE: usize = 32;
pub const IMG_CHANNELS: usize = 3;
pub const IMG_LEN: usize = IMG_CHANNELS * IMG_SIDE * IMG_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Images in [0,1] with class labels; immutable after construction.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u32>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        images: Tensor<f32>,
        labels: Vec<u32>,
        class_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != IMG_CHANNELS || shape[2] != IMG_SIDE || shape[3] != IMG_SIDE {
            return Err(Error::dim(format!(
                "dataset images must be [M,{IMG_CHANNELS},{IMG_SIDE},{IMG_SIDE}], got {shape:?}"
            )));
        }
        if shape[0] != labels.len() {
            return Err(Error::dim(format!("{} images vs {} labels", shape[0], labels.len())));
        }
        let n = class_names.len() as u32;
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::index(format!("label {bad} out of range for {n} classes")));
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Numeric("pixel values must lie in [0,1]".into()));
        }
        Ok(Dataset { images, labels, class_names, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Flat pixel view of one image.
    pub fn image(&self, i: usize) -> &[f32] {
        &self.images.data()[i * IMG_LEN..(i + 1) * IMG_LEN]
    }

    /// Indices of every example of one class.
    pub fn indices_of_class(&self, class: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the given examples, order preserved.
    pub fn subset(&self, indices: &[usize], split: Split) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::config("cannot build an empty dataset subset"));
        }
        let mut data = Vec::with_capacity(indices.len() * IMG_LEN);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::index(format!("subset index {i} out of range {}", self.len())));
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            images: Tensor::new(vec![indices.len(), IMG_CHANNELS, IMG_SIDE, IMG_SIDE], data)?,
            labels,
            class_names: self.class_names.clone(),
            split,
        })
    }

    /// Seeded per-class 90/10 split into (train, val).
    pub fn split_train_val(&self, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
            return Err(Error::config(format!("val fraction {val_fraction} not in (0,1)")));
        }
        let mut train_idx = Vec::new();
        let mut val_idx = Vec::new();
        for class in 0..self.n_classes() as u32 {
            let mut idx = self.indices_of_class(class);
            if idx.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[class as u64, 0x5911]));
            idx.shuffle(&mut rng);
            let n_val = ((idx.len() as f64) * val_fraction).ceil() as usize;
            let n_val = n_val.min(idx.len().saturating_sub(1)).max(1);
            val_idx.extend_from_slice(&idx[..n_val]);
            train_idx.extend_from_slice(&idx[n_val..]);
        }
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        Ok((self.subset(&train_idx, Split::Train)?, self.subset(&val_idx, Split::Val)?))
    }

    /// Every class must appear at least once in a training split.
    pub fn check_classes_nonempty(&self) -> Result<()> {
        for c in 0..self.n_classes() as u32 {
            if !self.labels.contains(&c) {
                return Err(Error::config(format!(
                    "class {c} ({}) has no examples in the {} split",
                    self.class_names[c as usize], self.split
                )));
            }
        }
        Ok(())
    }
}

/// All target-class images plus an equal-count seeded sample of non-target
/// images: the balanced evaluation set behind every experiment.
pub fn balanced_test(test: &Dataset, target: u32, seed: u64) -> Result<Dataset> {
    let target_idx = test.indices_of_class(target);
    if target_idx.is_empty() {
        return Err(Error::config(format!("target class {target} has no images in this split")));
    }
    let mut non_target: Vec<usize> = (0..test.len()).filter(|&i| test.labels[i] != target).collect();
    if non_target.len() < target_idx.len() {
        return Err(Error::config(format!(
            "need {} non-target images to balance target {target}, only {} available",
            target_idx.len(),
            non_target.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[target as u64, 0xba1a]));
    non_target.shuffle(&mut rng);
    non_target.truncate(target_idx.len());
    let mut all = target_idx;
    all.extend(non_target);
    test.subset(&all, test.split)
}
