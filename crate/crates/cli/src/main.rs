//! `sceneseg`: evaluation, decoding, linting, statistics, synthetic data
//! and the reference model, behind one binary.

mod commands;
mod defaults;
mod status;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sceneseg::decode::DecodeMode;
use sceneseg::metrics::F1Strategy;

use crate::status::Status;

#[derive(Debug, Parser)]
#[command(
    name = "sceneseg",
    version,
    about = "Multi-label temporal scene segmentation toolkit"
)]
pub struct Cli {
    /// TOML file with default flag values (flat table, keys as in the flags
    /// with dashes replaced by underscores).
    #[arg(long, global = true, env = "SCENESEG_DEFAULTS", value_name = "FILE")]
    pub defaults: Option<PathBuf>,

    /// Upper bound on worker threads.
    #[arg(long, global = true, env = "SCENESEG_THREADS", value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against ground truth (Avg_mAP and Avg_F1).
    Evaluate(EvaluateArgs),
    /// Turn per-sample model outputs into a predictions document.
    Decode(DecodeArgs),
    /// Lint an annotation document, optionally previewing shot snapping.
    Validate(ValidateArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Run the reference model over feature files, fitting heads when
    /// annotations are given.
    ModelDemo(ModelDemoArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth annotations.json.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// predictions.json. An empty file counts as no predictions.
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Taxonomy JSON (default: bundled 82-class taxonomy).
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,
    /// Directory for report.json and report.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Boundary matching order [sequential|nearest-pair-first].
    #[arg(long, value_name = "STRATEGY")]
    pub f1_strategy: Option<F1Strategy>,
}

#[derive(Debug, Args, Clone)]
pub struct DecodeFlags {
    /// Boundary probability threshold.
    #[arg(long, value_name = "P")]
    pub thr: Option<f64>,
    /// Non-maximum suppression window in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub nms_window: Option<f64>,
    /// Decoder [boundary|framewise].
    #[arg(long, value_name = "MODE")]
    pub mode: Option<DecodeMode>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Directory of `<video_id>.bin` frame-output containers.
    #[arg(long, value_name = "DIR")]
    pub outputs_dir: PathBuf,
    #[command(flatten)]
    pub decode: DecodeFlags,
    /// Output predictions.json.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// annotations.json to lint.
    #[arg(long, value_name = "FILE")]
    pub ann: PathBuf,
    /// Taxonomy JSON (default: bundled).
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,
    /// shots.json; enables the snapping preview.
    #[arg(long, value_name = "FILE")]
    pub shots: Option<PathBuf>,
    /// Snapping radius in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub snap_eps: Option<f64>,
    /// Write the lint report as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// annotations.json.
    #[arg(long, value_name = "FILE")]
    pub ann: PathBuf,
    /// Taxonomy JSON (default: bundled).
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,
    /// Directory for stats.json and stats.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// TOML file with generator parameters.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub num_videos: Option<usize>,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, value_name = "SIGMA")]
    pub feature_noise: Option<f64>,
    /// Magnitude of the noise on synthetic label scores.
    #[arg(long, value_name = "SIGMA")]
    pub label_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelDemoArgs {
    /// TOML file with optional [model] and [fit] tables.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Weight directory (manifest.json plus tensors). Default: seeded init.
    #[arg(long, value_name = "DIR")]
    pub weights: Option<PathBuf>,
    /// Directory of `<video_id>.<frame|audio|text>.bin` feature files.
    #[arg(long, value_name = "DIR")]
    pub features_dir: PathBuf,
    /// annotations.json; heads are fitted to it and the result evaluated.
    #[arg(long, value_name = "FILE")]
    pub ann: Option<PathBuf>,
    /// Taxonomy JSON (default: bundled).
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeFlags,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                Status::Input as u8
            } else {
                Status::Ok as u8
            });
        }
    };
    let status = match commands::run(cli) {
        Ok(s) => s,
        Err(e) => {
            let s = status::classify(&e);
            eprintln!("error: {e:#}");
            s
        }
    };
    ExitCode::from(status as u8)
}
