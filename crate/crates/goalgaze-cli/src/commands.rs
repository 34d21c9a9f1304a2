//! One function per CLI verb. Progress goes to stderr; machine-readable
//! output goes to files under --out (or stdout where noted).

use crate::data_source::DataSource;
use crate::manifest::write_manifest;
use anyhow::{anyhow, bail, Context, Result};
use goalgaze_core::data::blend::BlendSidecar;
use goalgaze_core::data::hard::HardSidecar;
use goalgaze_core::data::{
    balanced_test, make_blended_set, mine_hard_set, save_corpus, Dataset, Split,
};
use goalgaze_core::experiment::{
    self, compare_baseline, evaluate_model, read_rows, run_grid, trend_report, EvalMaterial,
    ExperimentKind, GridInputs, GridSpec, ModelKind,
};
use goalgaze_core::nn::{checkpoint, AttentionWeights, DenseParams, NetConfig, Network};
use goalgaze_core::sdt::Truth;
use goalgaze_core::tensor::io as tensor_io;
use goalgaze_core::train::{
    pretrain, retrain_head, top1_accuracy, train_attention, PretrainConfig, TrainConfig,
};
use serde_json::json;
use std::path::{Path, PathBuf};

fn progress(msg: &str) {
    eprintln!("[goalgaze] {msg}");
}

// ------------------------------------------------------------- pretrain

#[allow(clippy::too_many_arguments)]
pub fn cmd_pretrain(
    data: &str,
    epochs: usize,
    seed: u64,
    lr: f64,
    batch_size: usize,
    no_augment: bool,
    out: &Path,
) -> Result<()> {
    let source = DataSource::parse(data)?;
    let train = source.load(Split::Train)?;
    progress(&format!("loaded {} training images, {} classes", train.len(), train.n_classes()));
    let cfg = PretrainConfig {
        epochs,
        lr,
        batch_size,
        seed,
        augment: !no_augment,
        val_fraction: 0.1,
    };
    let netcfg = NetConfig::desk(train.n_classes());
    progress(&format!(
        "pretraining base model ({} filters at the attention slot)",
        netcfg.attention_filters()
    ));
    let (net, history) = pretrain(netcfg, &train, &cfg)?;
    progress(&format!(
        "done in {:.1}s over {} epochs; final train loss {:.4}",
        history.wall_time_s,
        history.epochs_run,
        history.train_loss.last().copied().unwrap_or(f64::NAN)
    ));
    let acc = top1_accuracy(&net, &train)?;
    progress(&format!("top-1 accuracy on the training corpus: {acc:.3}"));
    checkpoint::save(out, &net)?;
    history.save(out)?;
    write_manifest(
        out,
        "pretrain",
        json!({
            "data": source.describe(),
            "data_sha256": experiment::dataset_hash(&train),
            "pretrain": cfg,
            "net": net.cfg,
            "train_top1": acc,
        }),
    )?;
    progress(&format!("checkpoint written to {}", out.display()));
    Ok(())
}

// ------------------------------------------- train-attn and retrain-fc

pub struct TrainArgs<'a> {
    pub base: &'a Path,
    pub data: &'a str,
    pub target: u32,
    pub alpha: f64,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub split_seed: Option<u64>,
    pub out: &'a Path,
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match args.config {
        Some(path) => TrainConfig::from_json_file(path)
            .with_context(|| format!("reading train config {}", path.display()))?,
        None => TrainConfig::new(args.alpha, vec![args.target], 42),
    };
    // flags override config keys
    cfg.alpha = args.alpha;
    cfg.target = vec![args.target];
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_base_and_splits(args: &TrainArgs) -> Result<(Network<f32>, Dataset, Dataset, TrainConfig)> {
    let base = checkpoint::load(args.base)?;
    let source = DataSource::parse(args.data)?;
    let corpus = source.load(Split::Train)?;
    let cfg = resolve_train_config(args)?;
    let split_seed = args.split_seed.unwrap_or(cfg.seed);
    let (train, val) = corpus.split_train_val(0.1, split_seed)?;
    progress(&format!(
        "base {} | {} train / {} val images | target {} alpha {}",
        args.base.display(),
        train.len(),
        val.len(),
        args.target,
        cfg.alpha
    ));
    Ok((base, train, val, cfg))
}

pub fn cmd_train_attn(args: TrainArgs) -> Result<()> {
    let (base, train, val, cfg) = load_base_and_splits(&args)?;
    let (attn, history) = train_attention(&base, &train, &val, &cfg)?;
    progress(&format!(
        "trained {} weights in {} epochs ({:.1}s): {:?}",
        attn.len(),
        history.epochs_run,
        history.wall_time_s,
        history.stop_reason
    ));
    std::fs::create_dir_all(args.out)?;
    tensor_io::save_tensor(&args.out.join("attn.ggtn"), attn.tensor())?;
    history.save(args.out)?;
    write_manifest(
        args.out,
        "train-attn",
        json!({
            "base": args.base.display().to_string(),
            "base_sha256": experiment::network_hash(&base),
            "data": DataSource::parse(args.data)?.describe(),
            "train": cfg,
            "split_seed": args.split_seed.unwrap_or(cfg.seed),
            "attention_params": attn.len(),
            "head_params": base.head_param_count(),
            "final_layer_params": base.final_layer_param_count(),
        }),
    )?;
    Ok(())
}

pub fn cmd_retrain_fc(args: TrainArgs) -> Result<()> {
    let (base, train, val, cfg) = load_base_and_splits(&args)?;
    let (fc2, history) = retrain_head(&base, &train, &val, &cfg)?;
    progress(&format!(
        "retrained final layer ({} parameters, vs {} attention weights) in {} epochs",
        fc2.weight.numel() + fc2.bias.numel(),
        base.attention_param_count(),
        history.epochs_run,
    ));
    std::fs::create_dir_all(args.out)?;
    tensor_io::save_tensor(&args.out.join("head.fc2.weight.ggtn"), &fc2.weight)?;
    tensor_io::save_tensor(&args.out.join("head.fc2.bias.ggtn"), &fc2.bias)?;
    history.save(args.out)?;
    write_manifest(
        args.out,
        "retrain-fc",
        json!({
            "base": args.base.display().to_string(),
            "base_sha256": experiment::network_hash(&base),
            "data": DataSource::parse(args.data)?.describe(),
            "train": cfg,
            "split_seed": args.split_seed.unwrap_or(cfg.seed),
            "final_layer_params": fc2.weight.numel() + fc2.bias.numel(),
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------------ eval

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval(
    base_path: &Path,
    weights: Option<&Path>,
    data: &str,
    set: &str,
    set_file: Option<&Path>,
    target: u32,
    k: usize,
    seed: u64,
    blend_pairs: usize,
    out: &Path,
) -> Result<()> {
    let base = checkpoint::load(base_path)?;
    let experiment: ExperimentKind = set.parse().map_err(|e| anyhow!("{e}"))?;

    let material = build_material(&base, data, experiment, set_file, target, k, seed, blend_pairs)?;
    let (net, model_kind) = install_weights(&base, weights, target)?;
    let report = evaluate_model(&net, &material, k)?;
    progress(&format!(
        "{experiment} eval of {model_kind} model, target {target}: H={:.3} F={:.3} d'={:.3} c={:.3}",
        report.hit_rate, report.fa_rate, report.dprime, report.criterion
    ));
    std::fs::create_dir_all(out)?;
    let payload = json!({
        "target": target,
        "experiment": experiment,
        "model_kind": model_kind.to_string(),
        "report": report,
    });
    serde_json::to_writer_pretty(std::fs::File::create(out.join("report.json"))?, &payload)?;
    write_manifest(
        out,
        "eval",
        json!({
            "base": base_path.display().to_string(),
            "base_sha256": experiment::network_hash(&base),
            "weights": weights.map(|p| p.display().to_string()),
            "data": data,
            "set": experiment,
            "set_file": set_file.map(|p| p.display().to_string()),
            "target": target,
            "k": k,
            "seed": seed,
            "blend_pairs": blend_pairs,
        }),
    )?;
    Ok(())
}

fn install_weights(
    base: &Network<f32>,
    weights: Option<&Path>,
    target: u32,
) -> Result<(Network<f32>, ModelKind)> {
    let mut net = base.clone();
    let Some(path) = weights else {
        return Ok((net, ModelKind::Control));
    };
    if path.is_dir() {
        let w = tensor_io::load_tensor(&path.join("head.fc2.weight.ggtn"))?;
        let b = tensor_io::load_tensor(&path.join("head.fc2.bias.ggtn"))?;
        net.fc2 = DenseParams { weight: w, bias: b };
        Ok((net, ModelKind::HeadRetrain))
    } else {
        let w = tensor_io::load_tensor(path)?;
        net.attention = Some(AttentionWeights::from_tensor(w, vec![target], f64::NAN)?);
        Ok((net, ModelKind::Attention))
    }
}

#[allow(clippy::too_many_arguments)]
fn build_material(
    base: &Network<f32>,
    data: &str,
    experiment: ExperimentKind,
    set_file: Option<&Path>,
    target: u32,
    k: usize,
    seed: u64,
    blend_pairs: usize,
) -> Result<EvalMaterial> {
    if let Some(file) = set_file {
        return load_material_from_records(file, experiment, target);
    }
    let source = DataSource::parse(data)?;
    let test = source.load(Split::Test)?;
    match experiment {
        ExperimentKind::Standard => {
            let ds = balanced_test(&test, target, seed)?;
            Ok(EvalMaterial {
                experiment,
                target,
                truths: ds.labels.iter().map(|&l| Truth::Single(l)).collect(),
                images: ds.images,
            })
        }
        ExperimentKind::Blended => {
            let set = make_blended_set(&test, target, blend_pairs, seed)?;
            Ok(EvalMaterial {
                experiment,
                target,
                truths: set.label_pairs.iter().map(|&(a, b)| Truth::Pair(a, b)).collect(),
                images: set.images,
            })
        }
        ExperimentKind::Hard => {
            let (mined, _) = mine_hard_set(base, &test, k)?
                .ok_or_else(|| anyhow!("hard mining produced no images from this pool"))?;
            let ds = balanced_test(&mined, target, seed)?;
            Ok(EvalMaterial {
                experiment,
                target,
                truths: ds.labels.iter().map(|&l| Truth::Single(l)).collect(),
                images: ds.images,
            })
        }
    }
}

fn load_material_from_records(
    file: &Path,
    experiment: ExperimentKind,
    target: u32,
) -> Result<EvalMaterial> {
    let ds = goalgaze_core::data::load_corpus(file, Split::Test, None)?;
    let truths = if experiment == ExperimentKind::Blended {
        let sidecar_path = file.with_extension("json");
        let sidecar: BlendSidecar = serde_json::from_reader(
            std::fs::File::open(&sidecar_path)
                .with_context(|| format!("blended sidecar {}", sidecar_path.display()))?,
        )?;
        if sidecar.label_pairs.len() != ds.len() {
            bail!(
                "sidecar lists {} pairs but {} holds {} records",
                sidecar.label_pairs.len(),
                file.display(),
                ds.len()
            );
        }
        sidecar.label_pairs.iter().map(|&(a, b)| Truth::Pair(a, b)).collect()
    } else {
        ds.labels.iter().map(|&l| Truth::Single(l)).collect()
    };
    Ok(EvalMaterial { experiment, target, truths, images: ds.images })
}

// ----------------------------------------------------------------- blend

pub fn cmd_blend(data: &str, target: u32, n: usize, seed: u64, out: &Path) -> Result<()> {
    let source = DataSource::parse(data)?;
    let test = source.load(Split::Test)?;
    let set = make_blended_set(&test, target, n, seed)?;
    std::fs::create_dir_all(out)?;
    let record_path = out.join("blended.bin");
    set.save(&record_path, target, seed)?;
    progress(&format!(
        "wrote {} blended images ({} with target {target}) to {}",
        set.len(),
        n,
        record_path.display()
    ));
    write_manifest(
        out,
        "blend",
        json!({
            "data": source.describe(),
            "data_sha256": experiment::dataset_hash(&test),
            "target": target,
            "n": n,
            "seed": seed,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------- mine-hard

pub fn cmd_mine_hard(base_path: &Path, data: &str, k: usize, out: &Path) -> Result<()> {
    let base = checkpoint::load(base_path)?;
    let source = DataSource::parse(data)?;
    let pool = source.load(Split::Test)?;
    std::fs::create_dir_all(out)?;
    match mine_hard_set(&base, &pool, k)? {
        Some((mined, indices)) => {
            let record_path = out.join("hard.bin");
            save_corpus(&record_path, &mined)?;
            let sidecar = HardSidecar { k, pool_size: pool.len(), source_indices: indices };
            serde_json::to_writer_pretty(
                std::fs::File::create(out.join("hard.json"))?,
                &sidecar,
            )?;
            progress(&format!(
                "mined {} of {} pool images the base model misses in its top-{k}",
                mined.len(),
                pool.len()
            ));
        }
        None => {
            let sidecar = HardSidecar { k, pool_size: pool.len(), source_indices: Vec::new() };
            serde_json::to_writer_pretty(
                std::fs::File::create(out.join("hard.json"))?,
                &sidecar,
            )?;
            progress("the base model missed nothing in this pool; no hard set written");
        }
    }
    write_manifest(
        out,
        "mine-hard",
        json!({
            "base": base_path.display().to_string(),
            "base_sha256": experiment::network_hash(&base),
            "data": source.describe(),
            "pool_sha256": experiment::dataset_hash(&pool),
            "k": k,
        }),
    )?;
    Ok(())
}

// -------------------------------------------------------------- run-grid

/// Grid config file: the core GridSpec plus input locations.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct GridFileConfig {
    pub base: String,
    pub data: String,
    #[serde(default)]
    pub test_data: Option<String>,
    #[serde(default)]
    pub hard_pool: Option<String>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(flatten)]
    pub spec: GridSpec,
}

fn default_val_fraction() -> f64 {
    0.1
}

pub fn cmd_run_grid(
    config_path: &Path,
    out: &Path,
    base_override: Option<&Path>,
    data_override: Option<&str>,
    threads_override: Option<usize>,
) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading grid config {}", config_path.display()))?;
    let mut file_cfg: GridFileConfig = serde_json::from_str(&text)?;
    if let Some(base) = base_override {
        file_cfg.base = base.display().to_string();
    }
    if let Some(data) = data_override {
        file_cfg.data = data.to_string();
    }
    if threads_override.is_some() {
        file_cfg.spec.threads = threads_override;
    }

    let base = checkpoint::load(Path::new(&file_cfg.base))?;
    let train_source = DataSource::parse(&file_cfg.data)?;
    let (corpus_train, default_test) = match &file_cfg.test_data {
        Some(t) => {
            let train = train_source.load(Split::Train)?;
            let test = DataSource::parse(t)?.load(Split::Test)?;
            (train, test)
        }
        None => train_source.load_train_test()?,
    };
    let hard_pool = match &file_cfg.hard_pool {
        Some(h) => Some(DataSource::parse(h)?.load(Split::Test)?),
        None => None,
    };
    let split_seed = file_cfg.split_seed.unwrap_or(file_cfg.spec.seed);
    let (train, val) = corpus_train.split_train_val(file_cfg.val_fraction, split_seed)?;
    progress(&format!(
        "grid: {} targets x {} alphas, {} experiments, baseline={}, {} train / {} val / {} test",
        file_cfg.spec.targets.len(),
        file_cfg.spec.alphas.len(),
        file_cfg.spec.experiments.len(),
        file_cfg.spec.include_baseline,
        train.len(),
        val.len(),
        default_test.len()
    ));

    let inputs = GridInputs {
        base: &base,
        train: &train,
        val: &val,
        test: &default_test,
        hard_pool: hard_pool.as_ref(),
    };
    let outcome = run_grid(&file_cfg.spec, &inputs, out, &|msg| progress(msg))?;
    progress(&format!(
        "grid complete: {} rows, {} cells trained, {} resumed; results at {}",
        outcome.rows.len(),
        outcome.cells.iter().filter(|c| !c.resumed).count(),
        outcome.cells.iter().filter(|c| c.resumed).count(),
        out.join("results.csv").display()
    ));
    write_manifest(
        out,
        "run-grid",
        json!({
            "config_path": config_path.display().to_string(),
            "resolved": {
                "base": file_cfg.base,
                "data": file_cfg.data,
                "test_data": file_cfg.test_data,
                "hard_pool": file_cfg.hard_pool,
                "val_fraction": file_cfg.val_fraction,
                "split_seed": split_seed,
                "spec": file_cfg.spec,
            },
        }),
    )?;
    Ok(())
}

// --------------------------------------------------------------- analyze

pub fn cmd_analyze(
    results: &Path,
    out: Option<&Path>,
    weights_dir: Option<&Path>,
    baseline_alpha: f64,
) -> Result<()> {
    let rows = read_rows(results)?;
    progress(&format!("loaded {} rows from {}", rows.len(), results.display()));

    let mut experiments: Vec<ExperimentKind> = rows.iter().map(|r| r.experiment).collect();
    experiments.sort_unstable();
    experiments.dedup();

    let mut trend_json = serde_json::Map::new();
    for &exp in &experiments {
        match trend_report(&rows, exp, ModelKind::Attention) {
            Ok(report) => {
                trend_json.insert(exp.to_string(), serde_json::to_value(&report)?);
            }
            Err(e) => {
                trend_json.insert(exp.to_string(), json!({ "error": e.to_string() }));
            }
        }
    }

    let baseline = match compare_baseline(&rows, baseline_alpha) {
        Ok(cmp) => serde_json::to_value(&cmp)?,
        Err(e) => json!({ "error": e.to_string() }),
    };

    let spearman = match weights_dir {
        Some(dir) => serde_json::to_value(spearman_from_weights(&rows, dir)?)?,
        None => serde_json::Value::Null,
    };

    let summary = json!({
        "rows": rows.len(),
        "trends": trend_json,
        "baseline_comparison": baseline,
        "weight_spearman": spearman,
    });
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            serde_json::to_writer_pretty(
                std::fs::File::create(dir.join("summary.json"))?,
                &summary,
            )?;
            write_manifest(
                dir,
                "analyze",
                json!({
                    "results": results.display().to_string(),
                    "results_sha256": experiment::file_hash(results)?,
                    "baseline_alpha": baseline_alpha,
                    "weights_dir": weights_dir.map(|p| p.display().to_string()),
                }),
            )?;
            progress(&format!("summary written to {}", dir.join("summary.json").display()));
        }
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(())
}

fn spearman_from_weights(
    rows: &[goalgaze_core::experiment::ResultRow],
    dir: &Path,
) -> Result<serde_json::Value> {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for row in rows {
        cells.entry(row.target).or_default().push(row.alpha);
    }
    let mut out = serde_json::Map::new();
    for (target, alphas) in cells {
        let mut alphas: Vec<f64> = alphas;
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        alphas.dedup();
        let mut by_alpha = Vec::new();
        for alpha in alphas {
            let path = goalgaze_core::experiment::cell_dir(dir, target, alpha).join("attn.ggtn");
            if !path.exists() {
                continue;
            }
            by_alpha.push((alpha, tensor_io::load_tensor(&path)?.into_data()));
        }
        if by_alpha.len() >= 2 {
            let report = goalgaze_core::experiment::weight_stats(&by_alpha)?;
            out.insert(target.to_string(), serde_json::to_value(&report)?);
        }
    }
    Ok(serde_json::Value::Object(out))
}

// ------------------------------------------------------------- helpers

pub fn parse_out(path: &str) -> PathBuf {
    PathBuf::from(path)
}
