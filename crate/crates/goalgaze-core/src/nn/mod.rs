//! Network definition: VGG-style conv blocks, the filter-wise attention
//! layer, the dense head, and whole-network forward passes.

pub mod checkpoint;

use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, NodeId};
use crate::tensor::{Element, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-filter non-negative attention weights for one (target, alpha) pair.
#[derive(Clone, Debug)]
pub struct AttentionWeights<T = f32> {
    w: Tensor<T>,
    pub target: Vec<u32>,
    pub alpha: f64,
}

impl<T: Element> AttentionWeights<T> {
    /// Fresh weights are all exactly 1.0: modulation starts as the identity.
    pub fn identity(filters: usize, target: Vec<u32>, alpha: f64) -> Self {
        AttentionWeights { w: Tensor::ones(&[filters]), target, alpha }
    }

    pub fn from_tensor(w: Tensor<T>, target: Vec<u32>, alpha: f64) -> Result<Self> {
        if w.shape().len() != 1 {
            return Err(Error::dim(format!("attention weights must be rank 1, got {:?}", w.shape())));
        }
        let attn = AttentionWeights { w, target, alpha };
        attn.check_nonneg()?;
        Ok(attn)
    }

    pub fn weights(&self) -> &[T] {
        self.w.data()
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.w.numel() == 0
    }

    pub fn check_nonneg(&self) -> Result<()> {
        if let Some(v) = self.w.data().iter().find(|v| **v < T::zero()) {
            return Err(Error::Constraint(format!("negative attention weight {v}")));
        }
        Ok(())
    }

    /// Clamp every weight to [0, +inf). Idempotent.
    pub fn project_nonneg(&mut self) {
        for v in self.w.data_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }

    pub fn set_weights(&mut self, data: &[T]) -> Result<()> {
        if data.len() != self.w.numel() {
            return Err(Error::dim(format!(
                "expected {} weights, got {}",
                self.w.numel(),
                data.len()
            )));
        }
        self.w.data_mut().copy_from_slice(data);
        Ok(())
    }
}

/// Modulate [B,F,H,W] activations by one non-negative scalar per filter,
/// broadcast across all spatial positions (Hadamard along the filter axis).
pub fn attention_apply<T: Element>(
    graph: &mut Graph<T>,
    act: NodeId,
    attn_node: NodeId,
    attn: &AttentionWeights<T>,
) -> Result<NodeId> {
    attn.check_nonneg()?;
    let f = graph.value(act).shape().get(1).copied().unwrap_or(0);
    if attn.len() != f {
        return Err(Error::dim(format!(
            "attention has {} weights but activation has {f} filters",
            attn.len()
        )));
    }
    graph.channel_scale(act, attn_node)
}

/// Value-level attention application for callers without a graph.
pub fn attention_apply_value<T: Element>(
    act: &Tensor<T>,
    attn: &AttentionWeights<T>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let a = g.leaf(act.clone(), false);
    let w = g.leaf(attn.tensor().clone(), false);
    let out = attention_apply(&mut g, a, w, attn)?;
    Ok(g.value(out).clone())
}

/// One conv block: `convs` conv+relu layers at `filters`, optional 2x2 pool.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockConfig {
    pub filters: usize,
    pub convs: usize,
    pub pool: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetConfig {
    /// Input as (channels, height, width).
    pub input: (usize, usize, usize),
    pub blocks: Vec<BlockConfig>,
    /// Attention slot: modulation applies to the output of this block index.
    pub attention_slot: usize,
    pub head_hidden: usize,
    pub classes: usize,
    pub kernel: usize,
    pub padding: usize,
}

impl NetConfig {
    /// Desk-scale stand-in for a large VGG-style classifier: four conv
    /// blocks over 3x32x32 input, attention after the penultimate block
    /// (128 filters), 2048-wide flatten into the dense head.
    pub fn desk(classes: usize) -> Self {
        NetConfig {
            input: (3, 32, 32),
            blocks: vec![
                BlockConfig { filters: 32, convs: 2, pool: true },
                BlockConfig { filters: 64, convs: 2, pool: true },
                BlockConfig { filters: 128, convs: 2, pool: true },
                BlockConfig { filters: 128, convs: 2, pool: false },
            ],
            attention_slot: 2,
            head_hidden: 256,
            classes,
            kernel: 3,
            padding: 1,
        }
    }

    /// Small configuration for fast tests; same structure, tiny extents.
    pub fn tiny(classes: usize) -> Self {
        NetConfig {
            input: (3, 8, 8),
            blocks: vec![
                BlockConfig { filters: 4, convs: 1, pool: true },
                BlockConfig { filters: 6, convs: 1, pool: true },
            ],
            attention_slot: 0,
            head_hidden: 8,
            classes,
            kernel: 3,
            padding: 1,
        }
    }

    /// Number of filters the attention layer modulates.
    pub fn attention_filters(&self) -> usize {
        self.blocks[self.attention_slot].filters
    }

    /// Flattened width of the head input.
    pub fn flatten_dim(&self) -> usize {
        let (_, mut h, mut w) = self.input;
        for b in &self.blocks {
            if b.pool {
                h /= 2;
                w /= 2;
            }
        }
        self.blocks.last().map(|b| b.filters).unwrap_or(0) * h * w
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::config("network needs at least one block"));
        }
        if self.attention_slot != self.blocks.len().saturating_sub(2) {
            return Err(Error::config(format!(
                "attention slot {} must follow the penultimate block ({} blocks)",
                self.attention_slot,
                self.blocks.len()
            )));
        }
        if self.classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConvParams<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DenseParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Ordered layer stack with frozen/trainable flags per parameter group.
#[derive(Clone, Debug)]
pub struct Network<T = f32> {
    pub cfg: NetConfig,
    pub blocks: Vec<Vec<ConvParams<T>>>,
    pub fc1: DenseParams<T>,
    pub fc2: DenseParams<T>,
    pub attention: Option<AttentionWeights<T>>,
    /// Per-channel (mean, std) of the training corpus, recorded at pretrain
    /// time so every later stage normalizes identically.
    pub norm: Option<([f64; 3], [f64; 3])>,
    pub seed_lineage: Vec<String>,
    frozen: std::collections::BTreeMap<String, bool>,
}

/// A recorded forward pass: the graph, the logits node, and the node ids of
/// every trainable parameter group (for reading gradients after backward).
pub struct ForwardPass<T: Element> {
    pub graph: Graph<T>,
    pub logits: NodeId,
    pub trainable: Vec<(String, NodeId)>,
}

impl<T: Element> Network<T> {
    /// He-initialized network with every group trainable.
    pub fn init(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut in_ch = cfg.input.0;
        for bc in &cfg.blocks {
            let mut convs = Vec::new();
            for _ in 0..bc.convs {
                let fan_in = (in_ch * cfg.kernel * cfg.kernel) as f64;
                let std = (2.0 / fan_in).sqrt();
                convs.push(ConvParams {
                    kernel: Tensor::rand_normal(&[bc.filters, in_ch, cfg.kernel, cfg.kernel], std, &mut rng),
                    bias: Tensor::zeros(&[bc.filters]),
                });
                in_ch = bc.filters;
            }
            blocks.push(convs);
        }
        let d = cfg.flatten_dim();
        let fc1 = DenseParams {
            weight: Tensor::rand_normal(&[d, cfg.head_hidden], (2.0 / d as f64).sqrt(), &mut rng),
            bias: Tensor::zeros(&[cfg.head_hidden]),
        };
        let fc2 = DenseParams {
            weight: Tensor::rand_normal(
                &[cfg.head_hidden, cfg.classes],
                (2.0 / cfg.head_hidden as f64).sqrt(),
                &mut rng,
            ),
            bias: Tensor::zeros(&[cfg.classes]),
        };
        let mut net = Network {
            cfg,
            blocks,
            fc1,
            fc2,
            attention: None,
            norm: None,
            seed_lineage: vec![format!("init:{seed}")],
            frozen: Default::default(),
        };
        for g in net.group_names() {
            net.frozen.insert(g, false);
        }
        Ok(net)
    }

    pub fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            for ci in 0..block.len() {
                names.push(format!("block{}.conv{}.kernel", bi + 1, ci + 1));
                names.push(format!("block{}.conv{}.bias", bi + 1, ci + 1));
            }
        }
        names.push("head.fc1.weight".into());
        names.push("head.fc1.bias".into());
        names.push("head.fc2.weight".into());
        names.push("head.fc2.bias".into());
        names
    }

    pub fn is_frozen(&self, group: &str) -> bool {
        self.frozen.get(group).copied().unwrap_or(true)
    }

    pub fn set_frozen(&mut self, prefix: &str, frozen: bool) {
        for (name, flag) in self.frozen.iter_mut() {
            if name.starts_with(prefix) {
                *flag = frozen;
            }
        }
    }

    pub fn freeze_all(&mut self) {
        for flag in self.frozen.values_mut() {
            *flag = true;
        }
    }

    pub fn trainable_group_names(&self) -> Vec<String> {
        self.frozen
            .iter()
            .filter(|(_, &f)| !f)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Total parameter count of the dense head, reported next to the
    /// attention parameter count for the parsimony comparison.
    pub fn head_param_count(&self) -> usize {
        self.fc1.weight.numel() + self.fc1.bias.numel() + self.fc2.weight.numel() + self.fc2.bias.numel()
    }

    /// Parameter count of the final dense layer alone.
    pub fn final_layer_param_count(&self) -> usize {
        self.fc2.weight.numel() + self.fc2.bias.numel()
    }

    pub fn attention_param_count(&self) -> usize {
        self.cfg.attention_filters()
    }

    pub fn group_tensor(&self, name: &str) -> Option<&Tensor<T>> {
        let mut parts = name.split('.');
        match (parts.next()?, parts.next()?, parts.next()) {
            ("head", fc, Some(field)) => {
                let d = if fc == "fc1" { &self.fc1 } else { &self.fc2 };
                Some(if field == "weight" { &d.weight } else { &d.bias })
            }
            (b, c, Some(field)) if b.starts_with("block") => {
                let bi: usize = b[5..].parse().ok()?;
                let ci: usize = c.strip_prefix("conv")?.parse().ok()?;
                let conv = self.blocks.get(bi.checked_sub(1)?)?.get(ci.checked_sub(1)?)?;
                Some(if field == "kernel" { &conv.kernel } else { &conv.bias })
            }
            _ => None,
        }
    }

    pub fn group_tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let mut parts = name.split('.');
        let (a, b, c) = (
            parts.next()?.to_string(),
            parts.next()?.to_string(),
            parts.next().map(|s| s.to_string()),
        );
        match (a.as_str(), b.as_str(), c) {
            ("head", fc, Some(field)) => {
                let d = if fc == "fc1" { &mut self.fc1 } else { &mut self.fc2 };
                Some(if field == "weight" { &mut d.weight } else { &mut d.bias })
            }
            (bname, cname, Some(field)) if bname.starts_with("block") => {
                let bi: usize = bname[5..].parse().ok()?;
                let ci: usize = cname.strip_prefix("conv")?.parse().ok()?;
                let conv = self
                    .blocks
                    .get_mut(bi.checked_sub(1)?)?
                    .get_mut(ci.checked_sub(1)?)?;
                Some(if field == "kernel" { &mut conv.kernel } else { &mut conv.bias })
            }
            _ => None,
        }
    }

    /// Record a full forward pass over a [B,C,H,W] batch.
    pub fn forward_batch(&self, batch: &Tensor<T>) -> Result<ForwardPass<T>> {
        let shape = batch.shape();
        if shape.len() != 4 || (shape[1], shape[2], shape[3]) != self.cfg.input {
            return Err(Error::dim(format!(
                "batch shape {:?} does not match configured input {:?}",
                shape, self.cfg.input
            )));
        }
        let mut graph = Graph::new();
        let mut trainable = Vec::new();
        let mut x = graph.leaf(batch.clone(), false);

        for (bi, block) in self.blocks.iter().enumerate() {
            for (ci, conv) in block.iter().enumerate() {
                let kname = format!("block{}.conv{}.kernel", bi + 1, ci + 1);
                let bname = format!("block{}.conv{}.bias", bi + 1, ci + 1);
                let k = graph.leaf(conv.kernel.clone(), !self.is_frozen(&kname));
                let b = graph.leaf(conv.bias.clone(), !self.is_frozen(&bname));
                if !self.is_frozen(&kname) {
                    trainable.push((kname, k));
                }
                if !self.is_frozen(&bname) {
                    trainable.push((bname, b));
                }
                x = graph.conv2d(x, k, b, 1, self.cfg.padding)?;
                x = graph.relu(x);
            }
            if self.cfg.blocks[bi].pool {
                x = graph.maxpool2d(x, 2, 2)?;
            }
            if bi == self.cfg.attention_slot {
                if let Some(attn) = &self.attention {
                    let w = graph.leaf(attn.tensor().clone(), true);
                    trainable.push(("attention.w".into(), w));
                    x = attention_apply(&mut graph, x, w, attn)?;
                }
            }
        }

        let b = shape[0];
        let flat = graph.reshape(x, &[b, self.cfg.flatten_dim()])?;

        let fc1w = graph.leaf(self.fc1.weight.clone(), !self.is_frozen("head.fc1.weight"));
        let fc1b = graph.leaf(self.fc1.bias.clone(), !self.is_frozen("head.fc1.bias"));
        if !self.is_frozen("head.fc1.weight") {
            trainable.push(("head.fc1.weight".into(), fc1w));
        }
        if !self.is_frozen("head.fc1.bias") {
            trainable.push(("head.fc1.bias".into(), fc1b));
        }
        let h1 = graph.dense(flat, fc1w, fc1b)?;
        let h1r = graph.relu(h1);

        let fc2w = graph.leaf(self.fc2.weight.clone(), !self.is_frozen("head.fc2.weight"));
        let fc2b = graph.leaf(self.fc2.bias.clone(), !self.is_frozen("head.fc2.bias"));
        if !self.is_frozen("head.fc2.weight") {
            trainable.push(("head.fc2.weight".into(), fc2w));
        }
        if !self.is_frozen("head.fc2.bias") {
            trainable.push(("head.fc2.bias".into(), fc2b));
        }
        let logits = graph.dense(h1r, fc2w, fc2b)?;

        Ok(ForwardPass { graph, logits, trainable })
    }

    /// Plain inference: logits for a batch, no gradients exposed.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let pass = self.forward_batch(batch)?;
        Ok(pass.graph.value(pass.logits).clone())
    }
}

/// Top-k class indices per row, ordered by logit descending; ties break
/// toward the lower class index.
pub fn topk<T: Element>(logits: &Tensor<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    if logits.shape().len() != 2 {
        return Err(Error::dim(format!("topk expects 2-d logits, got {:?}", logits.shape())));
    }
    let classes = logits.shape()[1];
    if k < 1 || k > classes {
        return Err(Error::config(format!("k={k} out of range for {classes} classes")));
    }
    let mut out = Vec::with_capacity(logits.shape()[0]);
    for row in logits.data().chunks(classes) {
        let mut idx: Vec<usize> = (0..classes).collect();
        idx.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        idx.truncate(k);
        out.push(idx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_net(seed: u64) -> Network<f64> {
        Network::<f64>::init(NetConfig::tiny(4), seed).unwrap()
    }

    fn rand_batch(rng: &mut ChaCha8Rng, b: usize) -> Tensor<f64> {
        Tensor::rand_uniform(&[b, 3, 8, 8], 0.0, 1.0, rng)
    }

    #[test]
    fn fresh_attention_weights_are_exactly_one() {
        let a = AttentionWeights::<f64>::identity(6, vec![2], 0.5);
        assert!(a.weights().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn attention_identity_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = tiny_net(3);
        let batch = rand_batch(&mut rng, 2);
        let plain = net.logits(&batch).unwrap();
        net.attention = Some(AttentionWeights::identity(net.cfg.attention_filters(), vec![0], 0.25));
        let modulated = net.logits(&batch).unwrap();
        assert_eq!(plain.data(), modulated.data());
    }

    #[test]
    fn attention_zero_weight_silences_exactly_one_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let act = Tensor::<f64>::rand_uniform(&[1, 3, 2, 2], -1.0, 1.0, &mut rng);
        let mut attn = AttentionWeights::identity(3, vec![0], 0.5);
        attn.set_weights(&[1.0, 0.0, 1.0]).unwrap();
        let out = attention_apply_value(&act, &attn).unwrap();
        assert!(out.data()[4..8].iter().all(|&v| v == 0.0));
        assert_eq!(&out.data()[0..4], &act.data()[0..4]);
        assert_eq!(&out.data()[8..12], &act.data()[8..12]);
    }

    #[test]
    fn attention_scaling_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let act = Tensor::<f64>::rand_uniform(&[1, 3, 2, 2], -1.0, 1.0, &mut rng);
        let mut attn = AttentionWeights::identity(3, vec![0], 0.5);
        attn.set_weights(&[2.0, 0.0, 0.5]).unwrap();
        let out = attention_apply_value(&act, &attn).unwrap();
        for f in 0..3 {
            for p in 0..4 {
                let expect = act.data()[f * 4 + p] * attn.weights()[f];
                assert_eq!(out.data()[f * 4 + p], expect);
            }
        }
    }

    #[test]
    fn attention_rejects_negative_weight_and_length_mismatch() {
        let act = Tensor::<f64>::zeros(&[1, 3, 2, 2]);
        let bad = AttentionWeights::from_tensor(
            Tensor::new(vec![3], vec![1.0, -0.1, 1.0]).unwrap(),
            vec![0],
            0.5,
        );
        assert!(bad.is_err());
        let wrong_len = AttentionWeights::<f64>::identity(2, vec![0], 0.5);
        assert!(attention_apply_value(&act, &wrong_len).is_err());
    }

    #[test]
    fn project_nonneg_clamps_and_is_idempotent() {
        let mut a = AttentionWeights::<f64>::identity(3, vec![0], 0.5);
        a.set_weights(&[-0.3, 0.0, 1.2]).unwrap();
        a.project_nonneg();
        assert_eq!(a.weights(), &[0.0, 0.0, 1.2]);
        a.project_nonneg();
        assert_eq!(a.weights(), &[0.0, 0.0, 1.2]);

        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = AttentionWeights::<f64>::identity(16, vec![0], 0.5);
        b.set_weights(&vals).unwrap();
        b.project_nonneg();
        for (got, want) in b.weights().iter().zip(vals.iter().map(|&v| v.max(0.0))) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn monotone_silencing_only_touches_the_silenced_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let act = Tensor::<f64>::rand_uniform(&[2, 4, 3, 3], -1.0, 1.0, &mut rng);
        let mut attn = AttentionWeights::identity(4, vec![0], 0.5);
        attn.set_weights(&[0.7, 0.0, 1.3, 0.4]).unwrap();
        let before = attention_apply_value(&act, &attn).unwrap();
        attn.set_weights(&[0.7, 0.0, 1.3, 0.0]).unwrap();
        let after = attention_apply_value(&act, &attn).unwrap();
        let plane = 9;
        for b in 0..2 {
            for f in 0..4 {
                let off = (b * 4 + f) * plane;
                if f == 3 {
                    assert!(after.data()[off..off + plane].iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(
                        &before.data()[off..off + plane],
                        &after.data()[off..off + plane],
                        "channel {f} changed"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_input_and_zero_biases_give_zero_logits() {
        let mut net = tiny_net(5);
        for name in net.group_names() {
            if name.ends_with("bias") {
                let t = net.group_tensor_mut(&name).unwrap();
                for v in t.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let batch = Tensor::<f64>::zeros(&[1, 3, 8, 8]);
        let logits = net.logits(&batch).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_naive_loop_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut net = tiny_net(7);
        net.attention = Some({
            let mut a = AttentionWeights::identity(4, vec![1], 0.9);
            a.set_weights(&[0.5, 1.5, 0.0, 2.0]).unwrap();
            a
        });
        let batch = rand_batch(&mut rng, 1);
        let logits = net.logits(&batch).unwrap();

        let naive = naive_forward(&net, &batch);
        for (g, w) in logits.data().iter().zip(&naive) {
            assert!((g - w).abs() < 1e-5, "naive {w} vs graph {g}");
        }
    }

    /// Independent forward pass: direct-summation conv, loop pool/dense.
    fn naive_forward(net: &Network<f64>, batch: &Tensor<f64>) -> Vec<f64> {
        let (_, mut h, mut w) = net.cfg.input;
        let mut chans = net.cfg.input.0;
        let mut act: Vec<f64> = batch.data().to_vec();
        for (bi, block) in net.blocks.iter().enumerate() {
            for conv in block {
                let f = conv.kernel.shape()[0];
                let kk = net.cfg.kernel;
                let pad = net.cfg.padding;
                let mut out = vec![0.0; f * h * w];
                for fi in 0..f {
                    for oy in 0..h {
                        for ox in 0..w {
                            let mut acc = conv.bias.data()[fi];
                            for ci in 0..chans {
                                for i in 0..kk {
                                    for j in 0..kk {
                                        let y = (oy + i) as isize - pad as isize;
                                        let x = (ox + j) as isize - pad as isize;
                                        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                            continue;
                                        }
                                        acc += act[(ci * h + y as usize) * w + x as usize]
                                            * conv.kernel.data()[((fi * chans + ci) * kk + i) * kk + j];
                                    }
                                }
                            }
                            out[(fi * h + oy) * w + ox] = acc.max(0.0);
                        }
                    }
                }
                act = out;
                chans = f;
            }
            if net.cfg.blocks[bi].pool {
                let (oh, ow) = (h / 2, w / 2);
                let mut out = vec![0.0; chans * oh * ow];
                for c in 0..chans {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            for i in 0..2 {
                                for j in 0..2 {
                                    best = best.max(act[(c * h + oy * 2 + i) * w + ox * 2 + j]);
                                }
                            }
                            out[(c * oh + oy) * ow + ox] = best;
                        }
                    }
                }
                act = out;
                h = oh;
                w = ow;
            }
            if bi == net.cfg.attention_slot {
                if let Some(attn) = &net.attention {
                    for c in 0..chans {
                        for p in 0..h * w {
                            act[c * h * w + p] *= attn.weights()[c];
                        }
                    }
                }
            }
        }
        let flat = act;
        let hidden: Vec<f64> = (0..net.cfg.head_hidden)
            .map(|k| {
                let mut acc = net.fc1.bias.data()[k];
                for (d, &v) in flat.iter().enumerate() {
                    acc += v * net.fc1.weight.data()[d * net.cfg.head_hidden + k];
                }
                acc.max(0.0)
            })
            .collect();
        (0..net.cfg.classes)
            .map(|k| {
                let mut acc = net.fc2.bias.data()[k];
                for (d, &v) in hidden.iter().enumerate() {
                    acc += v * net.fc2.weight.data()[d * net.cfg.classes + k];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = tiny_net(1);
        let batch = Tensor::<f64>::zeros(&[1, 3, 16, 16]);
        assert!(net.logits(&batch).is_err());
    }

    #[test]
    fn topk_orders_by_logit_then_index() {
        let logits = Tensor::<f64>::new(vec![1, 3], vec![0.1, 0.9, 0.5]).unwrap();
        assert_eq!(topk(&logits, 2).unwrap(), vec![vec![1, 2]]);

        let flat = Tensor::<f64>::full(&[1, 5], 2.0);
        assert_eq!(topk(&flat, 3).unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..50 {
            let logits = Tensor::<f64>::rand_uniform(&[1, 20], -1.0, 1.0, &mut rng);
            let got = topk(&logits, 5).unwrap();
            let mut taken = vec![false; 20];
            let mut want = Vec::new();
            for _ in 0..5 {
                let mut best = None;
                for i in 0..20 {
                    if taken[i] {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(j) => logits.data()[i] > logits.data()[j],
                    };
                    if better {
                        best = Some(i);
                    }
                }
                let i = best.unwrap();
                taken[i] = true;
                want.push(i);
            }
            assert_eq!(got[0], want);
        }
    }

    #[test]
    fn topk_rejects_out_of_range_k() {
        let logits = Tensor::<f64>::zeros(&[1, 3]);
        assert!(topk(&logits, 0).is_err());
        assert!(topk(&logits, 4).is_err());
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let mut net = tiny_net(9);
        net.freeze_all();
        net.attention = Some(AttentionWeights::identity(net.cfg.attention_filters(), vec![0], 0.5));
        let batch = rand_batch(&mut rng, 2);
        let labels = vec![0usize, 3];

        let loss_of = |net: &Network<f64>| {
            let pass = net.forward_batch(&batch).unwrap();
            let mut g = pass.graph;
            let l = g.softmax_xent(pass.logits, &labels).unwrap();
            let loss = g.weighted_sum(l, &[0.5, 0.5]).unwrap();
            (g, loss)
        };

        let pass = net.forward_batch(&batch).unwrap();
        let mut g = pass.graph;
        let l = g.softmax_xent(pass.logits, &labels).unwrap();
        let loss = g.weighted_sum(l, &[0.5, 0.5]).unwrap();
        g.backward(loss).unwrap();
        let (_, wnode) = pass.trainable.iter().find(|(n, _)| n == "attention.w").unwrap();
        let analytic = g.grad(*wnode).unwrap().clone();

        let eps = 1e-4;
        for i in 0..net.cfg.attention_filters() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            for (variant, delta) in [(&mut plus, eps), (&mut minus, -eps)] {
                let a = variant.attention.as_mut().unwrap();
                let mut wv = a.weights().to_vec();
                wv[i] += delta;
                a.set_weights(&wv).unwrap();
            }
            let (gp, lp) = loss_of(&plus);
            let (gm, lm) = loss_of(&minus);
            let numeric = (gp.value(lp).data()[0] - gm.value(lm).data()[0]) / (2.0 * eps);
            let got = analytic.data()[i];
            let denom = numeric.abs().max(got.abs()).max(1e-6);
            assert!(
                (numeric - got).abs() / denom < 1e-4,
                "attention weight {i}: analytic {got} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn frozen_groups_stay_out_of_the_trainable_list() {
        let mut net = tiny_net(11);
        net.freeze_all();
        net.set_frozen("head.fc2", false);
        let batch = Tensor::<f64>::zeros(&[1, 3, 8, 8]);
        let pass = net.forward_batch(&batch).unwrap();
        let names: Vec<_> = pass.trainable.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["head.fc2.weight", "head.fc2.bias"]);
    }

    #[test]
    fn desk_config_dimensions() {
        let net = Network::<f32>::init(NetConfig::desk(10), 0).unwrap();
        assert_eq!(net.final_layer_param_count(), 256 * 10 + 10);
        assert_eq!(net.attention_param_count(), 128);
        assert_eq!(net.cfg.flatten_dim(), 2048);
    }
}
