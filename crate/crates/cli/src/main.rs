//! `ees`: segment embedding streams, consolidate hierarchies, run benchmarks
//! and train predictors.
//!
//! Exit codes: 0 success, 2 input/format error, 3 configuration error,
//! 4 hierarchy lacks the embeddings consolidation needs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Layers, Source};

#[derive(Parser, Debug)]
#[command(name = "ees", version, about = "Streaming elastic-scale event segmentation and consolidation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Unused ones are ignored.
#[derive(Args, Debug, Default)]
struct Knobs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of hierarchy levels.
    #[arg(long)]
    layers: Option<String>,
    /// Boundary threshold, one value or a comma list (one per level).
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    window_cap: Option<String>,
    /// mean_pool_identity, linear_ar or mlp.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    /// Update the predictor online while segmenting.
    #[arg(long)]
    online_learning: bool,
    /// EESP predictor checkpoint.
    #[arg(long)]
    checkpoint: Option<String>,
    /// max_error, random or middle.
    #[arg(long)]
    essential: Option<String>,
    /// Include segment embeddings in JSONL output (needed by `consolidate`).
    #[arg(long)]
    emit_embeddings: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    attention_scale: Option<String>,
    /// Cosine threshold of the adjacent-frame baseline.
    #[arg(long)]
    sim_threshold: Option<String>,
    /// Boundary matching tolerance in frames.
    #[arg(long)]
    tolerance: Option<String>,
    /// clean, drift or nested.
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    streams: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    noise_sigma: Option<String>,
    #[arg(long)]
    drift_rate: Option<String>,
    /// Minimum centroid cosine distance; may be negative.
    #[arg(long, allow_hyphen_values = true)]
    separation: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
}

impl Knobs {
    fn flag_values(&self) -> Vec<(&'static str, String)> {
        let mut v: Vec<(&'static str, String)> = [
            ("layers", &self.layers),
            ("threshold", &self.threshold),
            ("window_cap", &self.window_cap),
            ("predictor", &self.predictor),
            ("hidden", &self.hidden),
            ("learning_rate", &self.learning_rate),
            ("checkpoint", &self.checkpoint),
            ("essential", &self.essential),
            ("seed", &self.seed),
            ("attention_scale", &self.attention_scale),
            ("sim_threshold", &self.sim_threshold),
            ("tolerance", &self.tolerance),
            ("corpus", &self.corpus),
            ("streams", &self.streams),
            ("dim", &self.dim),
            ("frames", &self.frames),
            ("noise_sigma", &self.noise_sigma),
            ("drift_rate", &self.drift_rate),
            ("separation", &self.separation),
            ("epochs", &self.epochs),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
        .collect();
        if self.online_learning {
            v.push(("online_learning", "true".into()));
        }
        if self.emit_embeddings {
            v.push(("emit_embeddings", "true".into()));
        }
        v
    }

    fn resolve(&self) -> Result<config::RunConfig, commands::CliError> {
        let mut layers = Layers::default();
        if let Some(path) = &self.config {
            layers.load_file(path).map_err(commands::CliError::config)?;
        }
        for (k, v) in self.flag_values() {
            layers.set(k, v, Source::Flag).map_err(commands::CliError::config)?;
        }
        layers.load_env(std::env::vars());
        layers.resolve().map_err(commands::CliError::config)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment an EMBS stream into JSONL event records.
    Segment {
        /// EMBS file, or `-` for standard input.
        input: String,
        /// JSONL output (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hierarchy statistics JSON (default: standard error).
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Summarize a segmented hierarchy into abstract/coarse/fine vectors.
    Consolidate {
        /// JSONL written by `segment --emit-embeddings`.
        #[arg(long)]
        hierarchy: PathBuf,
        /// The EMBS stream that was segmented.
        #[arg(long)]
        input: PathBuf,
        /// Summary JSON (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the summary vectors as EMBS, three rows per event.
        #[arg(long)]
        out_embs: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Compare EES against the threshold and cluster baselines.
    Bench {
        /// Corpus manifest; generated from the corpus settings when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Report JSON (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-stream CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Wall-clock timings JSON.
        #[arg(long)]
        timing: Option<PathBuf>,
        /// Run streams one after another.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Train a predictor on a corpus and write an EESP checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV (default: `<out>.loss.csv`).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Write a synthetic corpus (EMBS + truth files + manifest).
    Generate {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    match cli.command {
        Command::Segment { input, out, stats, knobs } => commands::segment(&knobs.resolve()?, &input, out, stats),
        Command::Consolidate { hierarchy, input, out, out_embs, knobs } => {
            commands::consolidate(&knobs.resolve()?, &hierarchy, &input, out, out_embs)
        }
        Command::Bench { manifest, out, csv, timing, serial, knobs } => {
            commands::bench(&knobs.resolve()?, manifest, out, csv, timing, serial)
        }
        Command::Train { manifest, out, loss_csv, knobs } => commands::train(&knobs.resolve()?, &manifest, &out, loss_csv),
        Command::Generate { out, knobs } => commands::generate(&knobs.resolve()?, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ees: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
