//! The full grid driver: one attention model (and optional head-retrain
//! baseline) per (target, alpha) cell, evaluated across the standard,
//! blended, and hard experiments, with seeded resumable persistence.

pub mod baseline;
pub mod csvio;
pub mod stats;
pub mod trends;

pub use baseline::{compare_baseline, BaselineComparison};
pub use csvio::{read_rows, write_rows, RESULTS_HEADER};
pub use stats::{spearman, weight_stats, WeightStatsReport, ZERO_EPS};
pub use trends::{trend_report, TrendReport};

use crate::data::augment::ChannelStats;
use crate::data::{balanced_test, make_blended_set, mine_hard_set, Dataset};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{topk, Network};
use crate::sdt::{report, score_topk, SdtReport, Truth};
use crate::tensor::{io as tensor_io, Tensor};
use crate::train::{retrain_head, train_attention, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const THREADS_ENV: &str = "GOALGAZE_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Standard,
    Blended,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Attention,
    HeadRetrain,
    Control,
}

/// One line of the results table; field order is the pinned CSV schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRow {
    pub target: u32,
    pub alpha: f64,
    pub experiment: ExperimentKind,
    pub model_kind: ModelKind,
    pub hits: usize,
    pub misses: usize,
    pub fas: usize,
    pub crs: usize,
    pub hit_rate: f64,
    pub fa_rate: f64,
    pub dprime: f64,
    pub criterion: f64,
    pub weight_variance: f64,
    pub zero_fraction: f64,
    pub epochs: usize,
    pub seed: u64,
    pub status: String,
}

/// Table-1 style intensity grid as a function of the class count:
/// 1/N, 2/N, 0.5, (N-1)/N, 1.
pub fn alpha_grid(n_classes: usize) -> Vec<f64> {
    let n = n_classes as f64;
    vec![1.0 / n, 2.0 / n, 0.5, (n - 1.0) / n, 1.0]
}

/// Training settings shared by every grid cell.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridTrainSettings {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_fraction")]
    pub nontarget_fraction: f64,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_rel")]
    pub stop_rel_improve: f64,
    #[serde(default = "d_consecutive")]
    pub stop_consecutive: usize,
    #[serde(default = "d_stride")]
    pub check_stride_epochs: usize,
    #[serde(default = "d_augment")]
    pub augment: bool,
}

fn d_lr() -> f64 {
    3e-4
}
fn d_batch() -> usize {
    16
}
fn d_fraction() -> f64 {
    1.0
}
fn d_max_epochs() -> usize {
    200
}
fn d_rel() -> f64 {
    1e-3
}
fn d_consecutive() -> usize {
    2
}
fn d_stride() -> usize {
    2
}
fn d_augment() -> bool {
    true
}

impl Default for GridTrainSettings {
    fn default() -> Self {
        GridTrainSettings {
            lr: d_lr(),
            batch_size: d_batch(),
            nontarget_fraction: d_fraction(),
            max_epochs: d_max_epochs(),
            stop_rel_improve: d_rel(),
            stop_consecutive: d_consecutive(),
            check_stride_epochs: d_stride(),
            augment: d_augment(),
        }
    }
}

impl GridTrainSettings {
    fn to_config(&self, alpha: f64, target: u32, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha,
            target: vec![target],
            lr: self.lr,
            batch_size: self.batch_size,
            nontarget_fraction: self.nontarget_fraction,
            max_epochs: self.max_epochs,
            stop_rel_improve: self.stop_rel_improve,
            stop_consecutive: self.stop_consecutive,
            check_stride_epochs: self.check_stride_epochs,
            seed,
            augment: self.augment,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub targets: Vec<u32>,
    pub alphas: Vec<f64>,
    pub experiments: Vec<ExperimentKind>,
    #[serde(default = "d_true")]
    pub include_baseline: bool,
    pub seed: u64,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_blend_pairs")]
    pub blend_pairs: usize,
    #[serde(default = "d_min_hard")]
    pub min_hard_per_target: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub train: GridTrainSettings,
}

fn d_true() -> bool {
    true
}
fn d_k() -> usize {
    5
}
fn d_blend_pairs() -> usize {
    50
}
fn d_min_hard() -> usize {
    5
}

impl GridSpec {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.targets.is_empty() || self.alphas.is_empty() || self.experiments.is_empty() {
            return Err(Error::config("grid needs targets, alphas, and experiments"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &t in &self.targets {
            if t as usize >= n_classes {
                return Err(Error::index(format!("target {t} out of range for N={n_classes}")));
            }
            if !seen.insert(t) {
                return Err(Error::config(format!("duplicate target {t}")));
            }
        }
        let n = n_classes as f64;
        for w in self.alphas.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::config("alphas must be strictly ascending"));
            }
        }
        for &a in &self.alphas {
            if !(a >= 1.0 / n && a <= 1.0) {
                return Err(Error::config(format!("alpha {a} outside [1/N, 1]")));
            }
        }
        if self.k == 0 || self.k > n_classes {
            return Err(Error::config(format!("k={} out of range", self.k)));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Immutable inputs shared read-only across grid workers.
pub struct GridInputs<'a> {
    pub base: &'a Network<f32>,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
    /// Pool for hard-set mining; the held-out test split when absent.
    pub hard_pool: Option<&'a Dataset>,
}

/// One evaluation set: images (unnormalized), ground truths, target class.
pub struct EvalMaterial {
    pub experiment: ExperimentKind,
    pub target: u32,
    pub images: Tensor<f32>,
    pub truths: Vec<Truth>,
}

/// Run one model over an evaluation set and score it.
pub fn evaluate_model(net: &Network<f32>, material: &EvalMaterial, k: usize) -> Result<SdtReport> {
    let stats = net
        .norm
        .map(ChannelStats::from_pair)
        .ok_or_else(|| Error::config("network lacks normalization stats"))?;
    let m = material.truths.len();
    let row = material.images.row_len();
    let mut preds = Vec::with_capacity(m);
    let all: Vec<usize> = (0..m).collect();
    for chunk in all.chunks(64) {
        let mut data = Vec::with_capacity(chunk.len() * row);
        for &i in chunk {
            data.extend_from_slice(&material.images.data()[i * row..(i + 1) * row]);
        }
        let mut shape = material.images.shape().to_vec();
        shape[0] = chunk.len();
        let batch = crate::data::augment::normalize_batch(&Tensor::new(shape, data)?, &stats);
        let logits = net.logits(&batch)?;
        preds.extend(topk(&logits, k)?);
    }
    let counts = score_topk(&preds, &material.truths, material.target)?;
    report(counts, k)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellOutcome {
    pub target: u32,
    pub alpha: f64,
    pub resumed: bool,
}

#[derive(Serialize, Deserialize)]
struct CellManifest {
    target: u32,
    alpha: f64,
    attention_seed: u64,
    head_seed: Option<u64>,
    attention_epochs: usize,
    head_epochs: Option<usize>,
}

pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellOutcome>,
    pub weight_stats_per_target: BTreeMap<u32, WeightStatsReport>,
    pub excluded_hard_targets: Vec<u32>,
    pub out_dir: PathBuf,
}

/// Worker count: GOALGAZE_THREADS env, else the spec, else available cores.
pub fn resolve_threads(spec_threads: Option<usize>) -> usize {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    spec_threads
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn run_grid(
    spec: &GridSpec,
    inputs: &GridInputs,
    out_dir: &Path,
    log: &(dyn Fn(&str) + Sync),
) -> Result<GridOutcome> {
    let n_classes = inputs.base.cfg.classes;
    spec.validate(n_classes)?;
    if inputs.base.norm.is_none() {
        return Err(Error::config("base checkpoint lacks normalization stats; re-run pretraining"));
    }
    if !inputs.base.trainable_group_names().is_empty() {
        return Err(Error::config("base checkpoint must be fully frozen"));
    }
    std::fs::create_dir_all(out_dir)?;

    // Hard set is mined once from the pool with the frozen base.
    let want_hard = spec.experiments.contains(&ExperimentKind::Hard);
    let mined: Option<Dataset> = if want_hard {
        let pool = inputs.hard_pool.unwrap_or(inputs.test);
        match mine_hard_set(inputs.base, pool, spec.k)? {
            Some((ds, indices)) => {
                log(&format!("mined hard set: {} of {} pool images", indices.len(), pool.len()));
                Some(ds)
            }
            None => {
                log("mined hard set is empty; hard experiment rows will be excluded");
                None
            }
        }
    } else {
        None
    };

    // Shared evaluation materials, one per (target, experiment).
    let mut materials: BTreeMap<(u32, ExperimentKind), EvalMaterial> = BTreeMap::new();
    let mut excluded_hard: Vec<u32> = Vec::new();
    for &target in &spec.targets {
        for &exp in &spec.experiments {
            match exp {
                ExperimentKind::Standard => {
                    let ds = balanced_test(inputs.test, target, derive_seed(spec.seed, &[target as u64, 0xE1]))?;
                    let truths = ds.labels.iter().map(|&l| Truth::Single(l)).collect();
                    materials.insert(
                        (target, exp),
                        EvalMaterial { experiment: exp, target, images: ds.images, truths },
                    );
                }
                ExperimentKind::Blended => {
                    let set = make_blended_set(
                        inputs.test,
                        target,
                        spec.blend_pairs,
                        derive_seed(spec.seed, &[target as u64, 0xE2]),
                    )?;
                    let truths = set.label_pairs.iter().map(|&(a, b)| Truth::Pair(a, b)).collect();
                    materials.insert(
                        (target, exp),
                        EvalMaterial { experiment: exp, target, images: set.images, truths },
                    );
                }
                ExperimentKind::Hard => {
                    let built = mined.as_ref().and_then(|ds| {
                        if ds.indices_of_class(target).len() < spec.min_hard_per_target {
                            return None;
                        }
                        balanced_test(ds, target, derive_seed(spec.seed, &[target as u64, 0xE3])).ok()
                    });
                    match built {
                        Some(ds) => {
                            let truths = ds.labels.iter().map(|&l| Truth::Single(l)).collect();
                            materials.insert(
                                (target, exp),
                                EvalMaterial { experiment: exp, target, images: ds.images, truths },
                            );
                        }
                        None => excluded_hard.push(target),
                    }
                }
            }
        }
    }
    excluded_hard.sort_unstable();
    excluded_hard.dedup();

    // Cells run as independent jobs on a bounded worker pool.
    let jobs: Vec<(usize, u32, usize)> = spec
        .targets
        .iter()
        .enumerate()
        .flat_map(|(ti, &t)| {
            spec.alphas.iter().enumerate().map(move |(ai, _)| (ti, t, ai))
        })
        .collect();
    let n_threads = resolve_threads(spec.threads).min(jobs.len().max(1));
    log(&format!("running {} cells on {n_threads} workers", jobs.len()));

    let next_job = Mutex::new(0usize);
    let results: Mutex<Vec<Option<(Vec<ResultRow>, CellOutcome, Vec<f32>)>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..n_threads {
            scope.spawn(|| loop {
                let job_idx = {
                    let mut cursor = next_job.lock().unwrap();
                    if *cursor >= jobs.len() {
                        return;
                    }
                    let j = *cursor;
                    *cursor += 1;
                    j
                };
                let (_, target, alpha_idx) = jobs[job_idx];
                let alpha = spec.alphas[alpha_idx];
                match run_cell(spec, inputs, &materials, target, alpha_idx, out_dir) {
                    Ok(cell) => {
                        log(&format!(
                            "cell target={target} alpha={alpha}: {}",
                            if cell.1.resumed { "resumed" } else { "trained" }
                        ));
                        results.lock().unwrap()[job_idx] = Some(cell);
                    }
                    Err(e) => {
                        log(&format!("cell target={target} alpha={alpha}: failed: {e}"));
                        let mut slot = first_error.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut weights_by_target: BTreeMap<u32, Vec<(f64, Vec<f32>)>> = BTreeMap::new();
    for slot in results.into_inner().unwrap() {
        let (cell_rows, outcome, attn_w) = slot.expect("every job must produce a result");
        weights_by_target
            .entry(outcome.target)
            .or_default()
            .push((outcome.alpha, attn_w));
        rows.extend(cell_rows);
        cells.push(outcome);
    }
    rows.sort_by(|a, b| {
        (a.target, a.alpha.to_bits(), a.model_kind, a.experiment).cmp(&(
            b.target,
            b.alpha.to_bits(),
            b.model_kind,
            b.experiment,
        ))
    });
    cells.sort_by(|a, b| (a.target, a.alpha.to_bits()).cmp(&(b.target, b.alpha.to_bits())));

    let mut weight_stats_per_target = BTreeMap::new();
    for (target, mut by_alpha) in weights_by_target {
        by_alpha.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        weight_stats_per_target.insert(target, weight_stats(&by_alpha)?);
    }

    csvio::write_rows(&out_dir.join("results.csv"), &rows)?;
    write_grid_manifest(spec, inputs, out_dir)?;
    write_grid_summary(&weight_stats_per_target, &excluded_hard, out_dir)?;

    Ok(GridOutcome {
        rows,
        cells,
        weight_stats_per_target,
        excluded_hard_targets: excluded_hard,
        out_dir: out_dir.to_path_buf(),
    })
}

pub fn cell_dir(out_dir: &Path, target: u32, alpha: f64) -> PathBuf {
    out_dir.join("weights").join(target.to_string()).join(alpha.to_string())
}

fn run_cell(
    spec: &GridSpec,
    inputs: &GridInputs,
    materials: &BTreeMap<(u32, ExperimentKind), EvalMaterial>,
    target: u32,
    alpha_idx: usize,
    out_dir: &Path,
) -> Result<(Vec<ResultRow>, CellOutcome, Vec<f32>)> {
    let alpha = spec.alphas[alpha_idx];
    let dir = cell_dir(out_dir, target, alpha);
    let rows_path = dir.join("rows.csv");
    let attn_path = dir.join("attn.ggtn");

    // Resume: a finished cell is never retrained.
    let head_done = !spec.include_baseline || dir.join("head.fc2.weight.ggtn").exists();
    if rows_path.exists() && attn_path.exists() && head_done {
        let rows = csvio::read_rows(&rows_path)?;
        let attn_w = tensor_io::load_tensor(&attn_path)?.into_data();
        return Ok((rows, CellOutcome { target, alpha, resumed: true }, attn_w));
    }
    std::fs::create_dir_all(&dir)?;

    let attn_seed = derive_seed(spec.seed, &[target as u64, alpha_idx as u64, 1]);
    let head_seed = derive_seed(spec.seed, &[target as u64, alpha_idx as u64, 2]);
    let mut rows = Vec::new();

    // Attention cell.
    let cfg = spec.train.to_config(alpha, target, attn_seed);
    let (attn, attn_epochs, attn_status, attn_weights) =
        match train_attention(inputs.base, inputs.train, inputs.val, &cfg) {
            Ok((attn, history)) => {
                tensor_io::save_tensor(&attn_path, attn.tensor())?;
                history.save(&dir.join("attn-history"))?;
                let w = attn.weights().to_vec();
                (Some(attn), history.epochs_run, "ok".to_string(), w)
            }
            Err(e) => (None, 0, format!("error:{e}"), Vec::new()),
        };
    let (wvar, wzero) = dispersion(&attn_weights);
    for &exp in &spec.experiments {
        rows.push(eval_row(
            spec, inputs, materials, target, alpha, exp, ModelKind::Attention, attn_seed,
            attn_epochs, wvar, wzero, &attn_status,
            |net| net.attention = attn.clone(),
        ));
    }

    // Baseline cell under the identical objective.
    let mut head_weights = Vec::new();
    if spec.include_baseline {
        let cfg = spec.train.to_config(alpha, target, head_seed);
        let (fc2, head_epochs, head_status) =
            match retrain_head(inputs.base, inputs.train, inputs.val, &cfg) {
                Ok((fc2, history)) => {
                    tensor_io::save_tensor(&dir.join("head.fc2.weight.ggtn"), &fc2.weight)?;
                    tensor_io::save_tensor(&dir.join("head.fc2.bias.ggtn"), &fc2.bias)?;
                    history.save(&dir.join("head-history"))?;
                    head_weights = fc2.weight.data().to_vec();
                    (Some(fc2), history.epochs_run, "ok".to_string())
                }
                Err(e) => (None, 0, format!("error:{e}")),
            };
        let (hvar, hzero) = dispersion(&head_weights);
        for &exp in &spec.experiments {
            let fc2 = fc2_for_eval(&fc2);
            rows.push(eval_row(
                spec, inputs, materials, target, alpha, exp, ModelKind::HeadRetrain, head_seed,
                head_epochs, hvar, hzero, &head_status,
                move |net| {
                    if let Some(fc2) = fc2 {
                        net.fc2 = fc2;
                    }
                },
            ));
        }
        let manifest = CellManifest {
            target,
            alpha,
            attention_seed: attn_seed,
            head_seed: Some(head_seed),
            attention_epochs: attn_epochs,
            head_epochs: Some(head_epochs),
        };
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("cell.json"))?, &manifest)?;
    } else {
        let manifest = CellManifest {
            target,
            alpha,
            attention_seed: attn_seed,
            head_seed: None,
            attention_epochs: attn_epochs,
            head_epochs: None,
        };
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("cell.json"))?, &manifest)?;
    }

    csvio::write_rows(&rows_path, &rows)?;
    Ok((rows, CellOutcome { target, alpha, resumed: false }, attn_weights))
}

fn fc2_for_eval(
    fc2: &Option<crate::nn::DenseParams<f32>>,
) -> Option<crate::nn::DenseParams<f32>> {
    fc2.clone()
}

fn dispersion(weights: &[f32]) -> (f64, f64) {
    if weights.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = weights.len() as f64;
    let mean = weights.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = weights.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let zero = weights.iter().filter(|&&v| v <= ZERO_EPS).count() as f64 / n;
    (var, zero)
}

#[allow(clippy::too_many_arguments)]
fn eval_row(
    spec: &GridSpec,
    inputs: &GridInputs,
    materials: &BTreeMap<(u32, ExperimentKind), EvalMaterial>,
    target: u32,
    alpha: f64,
    experiment: ExperimentKind,
    model_kind: ModelKind,
    seed: u64,
    epochs: usize,
    weight_variance: f64,
    zero_fraction: f64,
    train_status: &str,
    install: impl FnOnce(&mut Network<f32>),
) -> ResultRow {
    let blank = |status: String| ResultRow {
        target,
        alpha,
        experiment,
        model_kind,
        hits: 0,
        misses: 0,
        fas: 0,
        crs: 0,
        hit_rate: f64::NAN,
        fa_rate: f64::NAN,
        dprime: f64::NAN,
        criterion: f64::NAN,
        weight_variance,
        zero_fraction,
        epochs,
        seed,
        status,
    };
    if train_status != "ok" {
        return blank(train_status.to_string());
    }
    let material = match materials.get(&(target, experiment)) {
        Some(m) => m,
        None => return blank("excluded:insufficient-hard-images".into()),
    };
    let mut net = inputs.base.clone();
    install(&mut net);
    match evaluate_model(&net, material, spec.k) {
        Ok(r) => ResultRow {
            target,
            alpha,
            experiment,
            model_kind,
            hits: r.hits,
            misses: r.misses,
            fas: r.fas,
            crs: r.crs,
            hit_rate: r.hit_rate,
            fa_rate: r.fa_rate,
            dprime: r.dprime,
            criterion: r.criterion,
            weight_variance,
            zero_fraction,
            epochs,
            seed,
            status: "ok".into(),
        },
        Err(e) => blank(format!("error:{e}")),
    }
}

#[derive(Serialize)]
struct GridManifest<'a> {
    format: &'static str,
    version: u32,
    spec: &'a GridSpec,
    base_sha256: String,
    train_sha256: String,
    val_sha256: String,
    test_sha256: String,
    hard_pool_sha256: Option<String>,
}

fn write_grid_manifest(spec: &GridSpec, inputs: &GridInputs, out_dir: &Path) -> Result<()> {
    let manifest = GridManifest {
        format: "goalgaze-grid",
        version: 1,
        spec,
        base_sha256: network_hash(inputs.base),
        train_sha256: dataset_hash(inputs.train),
        val_sha256: dataset_hash(inputs.val),
        test_sha256: dataset_hash(inputs.test),
        hard_pool_sha256: inputs.hard_pool.map(dataset_hash),
    };
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("manifest.json"))?),
        &manifest,
    )?;
    Ok(())
}

fn write_grid_summary(
    stats: &BTreeMap<u32, WeightStatsReport>,
    excluded_hard: &[u32],
    out_dir: &Path,
) -> Result<()> {
    let mean_spearman: Vec<Option<f64>> = if stats.is_empty() {
        Vec::new()
    } else {
        let n_pairs = stats.values().next().map(|r| r.adjacent_spearman.len()).unwrap_or(0);
        (0..n_pairs)
            .map(|i| {
                let vals: Vec<f64> = stats
                    .values()
                    .filter_map(|r| r.adjacent_spearman.get(i).copied().flatten())
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect()
    };
    let summary = serde_json::json!({
        "weight_stats_per_target": stats,
        "mean_adjacent_spearman": mean_spearman,
        "excluded_hard_targets": excluded_hard,
    });
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("grid_summary.json"))?),
        &summary,
    )?;
    Ok(())
}

/// Content hash of a dataset: labels and image bytes.
pub fn dataset_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for &l in &ds.labels {
        h.update(l.to_le_bytes());
    }
    for &v in ds.images.data() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

/// Content hash of a network: config JSON plus every parameter group.
pub fn network_hash(net: &Network<f32>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&net.cfg).unwrap_or_default().as_bytes());
    for name in net.group_names() {
        if let Some(t) = net.group_tensor(&name) {
            for &v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    if let Some(a) = &net.attention {
        for &v in a.weights() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
