//! `goalgaze`: train and probe goal-directed filter-wise attention on a
//! frozen convolutional classifier.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;
mod data_source;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "goalgaze",
    version,
    about = "Goal-directed attention on a frozen convolutional classifier",
    after_help = "Data arguments accept either a corpus directory (train.bin/test.bin or \
data_batch_*.bin records) or a fully offline spec like \
`synth:seed=42,classes=10,per-class=40,style=standard`.\n\
GOALGAZE_THREADS overrides the grid worker count."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the base classifier from scratch and write a frozen checkpoint.
    Pretrain {
        /// Corpus directory or synth: spec.
        #[arg(long)]
        data: String,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Disable flip/crop augmentation.
        #[arg(long)]
        no_augment: bool,
        /// Checkpoint directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train attention weights for one (target, alpha) against a frozen base.
    TrainAttn {
        /// Base checkpoint directory.
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        target: u32,
        #[arg(long)]
        alpha: f64,
        /// JSON training config; flags override its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Seed of the 90/10 train/validation split (default: the train seed).
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain the final dense layer under the identical objective.
    RetrainFc {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        target: u32,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a standard, blended, or hard evaluation set.
    Eval {
        #[arg(long)]
        base: PathBuf,
        /// Attention weight file (.ggtn) or retrained-head directory; the
        /// frozen base when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        data: String,
        /// standard | blended | hard
        #[arg(long)]
        set: String,
        /// Pre-built record file (with sidecar) instead of constructing the set.
        #[arg(long)]
        set_file: Option<PathBuf>,
        #[arg(long)]
        target: u32,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        blend_pairs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a blended evaluation set for one target class.
    Blend {
        #[arg(long)]
        data: String,
        #[arg(long)]
        target: u32,
        /// Pairs per side; the set holds 2n images.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine pool images the frozen base model misses in its top-k.
    MineHard {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full (target x alpha) grid from a JSON config.
    RunGrid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the base checkpoint from the config.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Override the data source from the config.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a results CSV: trends, baseline deltas, weight statistics.
    Analyze {
        #[arg(long)]
        results: PathBuf,
        /// Output directory; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid output directory holding weights/{target}/{alpha}/attn.ggtn,
        /// for Spearman statistics.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        baseline_alpha: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                _ => {
                    eprint!("{e}");
                    return ExitCode::from(1);
                }
            }
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Pretrain { data, epochs, seed, lr, batch_size, no_augment, out } => {
            commands::cmd_pretrain(&data, epochs, seed, lr, batch_size, no_augment, &out)
        }
        Cmd::TrainAttn { base, data, target, alpha, config, seed, split_seed, out } => {
            commands::cmd_train_attn(commands::TrainArgs {
                base: &base,
                data: &data,
                target,
                alpha,
                config: config.as_deref(),
                seed,
                split_seed,
                out: &out,
            })
        }
        Cmd::RetrainFc { base, data, target, alpha, config, seed, split_seed, out } => {
            commands::cmd_retrain_fc(commands::TrainArgs {
                base: &base,
                data: &data,
                target,
                alpha,
                config: config.as_deref(),
                seed,
                split_seed,
                out: &out,
            })
        }
        Cmd::Eval { base, weights, data, set, set_file, target, k, seed, blend_pairs, out } => {
            commands::cmd_eval(
                &base,
                weights.as_deref(),
                &data,
                &set,
                set_file.as_deref(),
                target,
                k,
                seed,
                blend_pairs,
                &out,
            )
        }
        Cmd::Blend { data, target, n, seed, out } => {
            commands::cmd_blend(&data, target, n, seed, &out)
        }
        Cmd::MineHard { base, data, k, out } => commands::cmd_mine_hard(&base, &data, k, &out),
        Cmd::RunGrid { config, out, base, data, threads } => {
            commands::cmd_run_grid(&config, &out, base.as_deref(), data.as_deref(), threads)
        }
        Cmd::Analyze { results, out, weights, baseline_alpha } => {
            commands::cmd_analyze(&results, out.as_deref(), weights.as_deref(), baseline_alpha)
        }
    }
}
