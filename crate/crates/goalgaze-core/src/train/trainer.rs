//! The shared training loop and its three entry points: pretraining the
//! base classifier, training an attention layer against a frozen base, and
//! retraining the final dense layer as the non-attentional baseline.

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::{example_weight, weighted_epoch_loss};
use super::sample::subsample_epoch;
use super::stop::early_stop;
use super::{StopReason, TrainConfig, TrainHistory};
use crate::data::augment::{compute_channel_stats, make_batch, normalize_batch, ChannelStats};
use crate::data::Dataset;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{AttentionWeights, DenseParams, NetConfig, Network};
use crate::tensor::{Element, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Clone, Copy, PartialEq)]
enum LossMode {
    /// Intensity-weighted cross-entropy with optional epoch subsampling.
    Weighted,
    /// Plain mean cross-entropy (pretraining).
    Uniform,
}

struct Job<'a> {
    train: &'a Dataset,
    val: &'a Dataset,
    cfg: &'a TrainConfig,
    mode: LossMode,
    early_stopping: bool,
}

/// Train the attention weights of a frozen base network for one
/// (target, alpha) pair. Only the attention weights change; every weight
/// stays non-negative after every step.
pub fn train_attention(
    base: &Network<f32>,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(AttentionWeights<f32>, TrainHistory)> {
    cfg.validate(base.cfg.classes)?;
    let unfrozen = base.trainable_group_names();
    if !unfrozen.is_empty() {
        return Err(Error::config(format!(
            "base network must be fully frozen before attention training; trainable: {unfrozen:?}"
        )));
    }
    let mut net = base.clone();
    net.attention = Some(AttentionWeights::identity(
        net.cfg.attention_filters(),
        cfg.target.clone(),
        cfg.alpha,
    ));
    net.seed_lineage.push(format!("train-attn:{}", cfg.seed));
    let history = run(&mut net, Job { train, val, cfg, mode: LossMode::Weighted, early_stopping: true })?;
    Ok((net.attention.take().unwrap(), history))
}

/// Retrain the final dense layer under the identical objective, subsampling,
/// and stopping machinery, with the attention slot empty. Returns the new
/// final-layer parameters.
pub fn retrain_head(
    base: &Network<f32>,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(DenseParams<f32>, TrainHistory)> {
    cfg.validate(base.cfg.classes)?;
    if base.attention.is_some() {
        return Err(Error::config("head retraining requires an empty attention slot"));
    }
    let unfrozen = base.trainable_group_names();
    if !unfrozen.is_empty() {
        return Err(Error::config(format!(
            "base network must be fully frozen before head retraining; trainable: {unfrozen:?}"
        )));
    }
    let mut net = base.clone();
    net.set_frozen("head.fc2", false);
    net.seed_lineage.push(format!("retrain-fc:{}", cfg.seed));
    let history = run(&mut net, Job { train, val, cfg, mode: LossMode::Weighted, early_stopping: true })?;
    Ok((net.fc2.clone(), history))
}

/// Pretraining settings for the base classifier.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    #[serde(default = "default_pretrain_lr")]
    pub lr: f64,
    #[serde(default = "super::default_batch")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "super::default_augment")]
    pub augment: bool,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn default_pretrain_lr() -> f64 {
    1e-3
}
fn default_val_fraction() -> f64 {
    0.1
}

/// Train the base classifier from scratch on plain cross-entropy for a
/// fixed number of epochs, record normalization stats, and return it
/// frozen, ready for attention training.
pub fn pretrain(
    netcfg: NetConfig,
    corpus_train: &Dataset,
    cfg: &PretrainConfig,
) -> Result<(Network<f32>, TrainHistory)> {
    corpus_train.check_classes_nonempty()?;
    if netcfg.classes != corpus_train.n_classes() {
        return Err(Error::config(format!(
            "network expects {} classes but corpus has {}",
            netcfg.classes,
            corpus_train.n_classes()
        )));
    }
    let (train, val) = corpus_train.split_train_val(cfg.val_fraction, cfg.seed)?;
    let mut net = Network::<f32>::init(netcfg, cfg.seed)?;
    net.norm = Some(compute_channel_stats(&train).as_pair());
    net.seed_lineage.push(format!("pretrain:{}", cfg.seed));

    let tcfg = TrainConfig {
        alpha: 1.0 / net.cfg.classes as f64,
        target: vec![0],
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        nontarget_fraction: 1.0,
        max_epochs: cfg.epochs,
        stop_rel_improve: 0.0,
        stop_consecutive: 2,
        check_stride_epochs: 2,
        seed: cfg.seed,
        augment: cfg.augment,
    };
    let history = run(
        &mut net,
        Job { train: &train, val: &val, cfg: &tcfg, mode: LossMode::Uniform, early_stopping: false },
    )?;
    net.freeze_all();
    Ok((net, history))
}

/// Top-1 accuracy of a network on a dataset, for calibration reporting.
pub fn top1_accuracy(net: &Network<f32>, ds: &Dataset) -> Result<f64> {
    let stats = net
        .norm
        .map(ChannelStats::from_pair)
        .ok_or_else(|| Error::config("network lacks normalization stats"))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in all.chunks(64) {
        let batch = make_batch(ds, chunk, Some(&stats), None)?;
        let logits = net.logits(&batch)?;
        let preds = crate::nn::topk(&logits, 1)?;
        for (&i, p) in chunk.iter().zip(&preds) {
            if p[0] == ds.labels[i] as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn run(net: &mut Network<f32>, job: Job) -> Result<TrainHistory> {
    let start = Instant::now();
    let cfg = job.cfg;
    let stats = net
        .norm
        .map(ChannelStats::from_pair)
        .ok_or_else(|| Error::config("network lacks normalization stats; pretrain first"))?;
    if job.train.is_empty() || job.val.is_empty() {
        return Err(Error::config("training and validation splits must be non-empty"));
    }

    // Optimizer state per trainable group ("attention.w" included).
    let mut states: BTreeMap<String, AdamState<f32>> = BTreeMap::new();
    for name in net.trainable_group_names() {
        let numel = net.group_tensor(&name).map(|t| t.numel()).unwrap_or(0);
        states.insert(name, AdamState::new(numel));
    }
    if let Some(attn) = &net.attention {
        states.insert("attention.w".into(), AdamState::new(attn.len()));
    }
    if states.is_empty() {
        return Err(Error::config("no trainable parameter groups"));
    }
    let hp = AdamHyper::with_lr(cfg.lr);

    let val_images = normalize_batch(&job.val.images, &stats);
    let n_classes = net.cfg.classes;
    let subsampling = job.mode == LossMode::Weighted && cfg.nontarget_fraction < 1.0;

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_checks: Vec::new(),
        epochs_run: 0,
        stop_reason: StopReason::MaxEpochs,
        wall_time_s: 0.0,
        seed: cfg.seed,
    };

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut indices = if subsampling {
            subsample_epoch(
                &job.train.labels,
                n_classes,
                &cfg.target,
                cfg.nontarget_fraction,
                derive_seed(cfg.seed, &[epoch as u64, 0xA]),
            )?
        } else {
            (0..job.train.len()).collect()
        };
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64, 0xB]));
        indices.shuffle(&mut shuffle_rng);
        let mut augment_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64, 0xC]));

        let mut epoch_loss = 0f64;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = make_batch(
                job.train,
                chunk,
                Some(&stats),
                if cfg.augment { Some(&mut augment_rng) } else { None },
            )?;
            let labels: Vec<usize> = chunk.iter().map(|&i| job.train.labels[i] as usize).collect();
            let pass = net.forward_batch(&batch)?;
            let mut graph = pass.graph;
            let ce = graph.softmax_xent(pass.logits, &labels)?;

            let b = chunk.len() as f64;
            let coeffs: Vec<f32> = match job.mode {
                LossMode::Uniform => vec![(1.0 / b) as f32; chunk.len()],
                LossMode::Weighted => chunk
                    .iter()
                    .map(|&i| {
                        let label = job.train.labels[i];
                        let w = example_weight(label, &cfg.target, cfg.alpha, n_classes)?;
                        let up = if subsampling && !cfg.target.contains(&label) {
                            1.0 / cfg.nontarget_fraction
                        } else {
                            1.0
                        };
                        Ok((w * up / b) as f32)
                    })
                    .collect::<Result<_>>()?,
            };
            let loss = graph.weighted_sum(ce, &coeffs)?;
            let loss_value = Element::into_f64(graph.value(loss).data()[0]);
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}"
                )));
            }
            epoch_loss += loss_value * b;
            graph.backward(loss)?;

            for (name, node) in &pass.trainable {
                let grad = graph
                    .grad(*node)
                    .ok_or_else(|| Error::state(format!("no gradient for trainable group {name}")))?
                    .clone();
                let state = states
                    .get_mut(name)
                    .ok_or_else(|| Error::state(format!("no optimizer state for {name}")))?;
                if name == "attention.w" {
                    let attn = net.attention.as_mut().expect("attention present");
                    let mut w = attn.weights().to_vec();
                    adam_step(&mut w, grad.data(), state, &hp)?;
                    attn.set_weights(&w)?;
                    attn.project_nonneg();
                    attn.check_nonneg()?;
                } else {
                    let t = net
                        .group_tensor_mut(name)
                        .ok_or_else(|| Error::state(format!("unknown group {name}")))?;
                    adam_step(t.data_mut(), grad.data(), state, &hp)?;
                }
            }
        }
        history.train_loss.push(epoch_loss / indices.len() as f64);
        history.epochs_run = epoch;

        if epoch % cfg.check_stride_epochs == 0 {
            let val_loss = match job.mode {
                LossMode::Weighted => {
                    weighted_epoch_loss(net, &val_images, &job.val.labels, None, cfg)?
                }
                LossMode::Uniform => uniform_loss(net, &val_images, &job.val.labels)?,
            };
            history.val_checks.push((epoch, val_loss));
            if job.early_stopping {
                let losses: Vec<f64> = history.val_checks.iter().map(|&(_, l)| l).collect();
                if early_stop(&losses, cfg.stop_rel_improve, cfg.stop_consecutive) {
                    history.stop_reason = StopReason::EarlyStop { at_epoch: epoch };
                    break 'epochs;
                }
            }
        }
    }
    history.wall_time_s = start.elapsed().as_secs_f64();
    Ok(history)
}

/// Plain mean cross-entropy over preprocessed images.
pub fn uniform_loss(net: &Network<f32>, images: &Tensor<f32>, labels: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::config("loss over an empty stream"));
    }
    let row = images.row_len();
    let mut total = 0f64;
    let all: Vec<usize> = (0..labels.len()).collect();
    for chunk in all.chunks(64) {
        let mut data = Vec::with_capacity(chunk.len() * row);
        let mut chunk_labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            data.extend_from_slice(&images.data()[i * row..(i + 1) * row]);
            chunk_labels.push(labels[i] as usize);
        }
        let mut shape = images.shape().to_vec();
        shape[0] = chunk.len();
        let batch = Tensor::new(shape, data)?;
        let pass = net.forward_batch(&batch)?;
        let mut graph = pass.graph;
        let ce = graph.softmax_xent(pass.logits, &chunk_labels)?;
        total += graph.value(ce).data().iter().map(|&v| Element::into_f64(v)).sum::<f64>();
    }
    Ok(total / labels.len() as f64)
}
