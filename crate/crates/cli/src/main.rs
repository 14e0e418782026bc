//! `rfeval`: evaluate image sets with random-network features.

mod commands;
mod output;
mod sources;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rfeval::disturbances::DisturbanceKind;
use rfeval::extractors::{ExtractorKind, Tap};
use rfeval::metrics::Metric;

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "rfeval", version, about = "Generative-model evaluation with random and trained features")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Args)]
pub struct Shared {
    /// Network preset used when embedding images.
    #[arg(long, global = true, default_value = "vit-t")]
    pub extractor: ExtractorKind,
    /// Weight seed; repeat for several.
    #[arg(short = 's', long = "seed", global = true)]
    pub seeds: Vec<u64>,
    #[arg(long, global = true, default_value = "final")]
    pub tap: Tap,
    /// Precomputed feature file; repeat as needed. Skips extraction.
    #[arg(long = "features", global = true)]
    pub features: Vec<PathBuf>,
    /// Output path. Defaults to stdout for printed results.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Square network input size; defaults to the preset's 224.
    #[arg(long, global = true)]
    pub input_size: Option<usize>,
    #[arg(long, global = true, default_value_t = 32)]
    pub batch_size: usize,
    /// Load at most this many images per directory.
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    /// Skip undecodable files instead of aborting.
    #[arg(long, global = true)]
    pub skip_unreadable: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed an image directory and write a feature file per seed.
    Extract { images: PathBuf },
    /// Fréchet distance between a real and a generated set.
    Fid { inputs: Vec<PathBuf> },
    /// Kernel distance (unbiased MMD², cubic polynomial kernel).
    Kid { inputs: Vec<PathBuf> },
    /// Improved precision and recall.
    Pr {
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Metrics per seed plus mean and standard deviation (seeds default to 0-4).
    SeedSweep {
        inputs: Vec<PathBuf>,
        #[arg(long = "metric", default_value = "fid")]
        metrics: Vec<Metric>,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Apply a disturbance and write the result as PNGs into `--out`.
    Disturb {
        images: PathBuf,
        #[arg(long)]
        kind: DisturbanceKind,
        /// Level 1-3 of the kind's standard parameter ladder.
        #[arg(long, conflicts_with = "param")]
        level: Option<u8>,
        /// Explicit parameter instead of a level.
        #[arg(long)]
        param: Option<f64>,
        /// Image directory to draw replacements from (contamination only).
        #[arg(long)]
        contaminant: Option<PathBuf>,
    },
    /// Split samples into high-level and low-level outliers.
    OutlierSplit {
        /// Image directory; high level is the final tap, low level the stem.
        images: Option<PathBuf>,
        #[arg(long, default_value_t = rfeval::outliers::DEFAULT_K)]
        k: usize,
        /// Percentage of largest k-NN distances counted as far.
        #[arg(long, default_value_t = rfeval::outliers::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Replace real samples with outliers step by step and track a metric.
    Sweep {
        /// Real and outlier image directories.
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        step: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "fid")]
        metric: Metric,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Seed for the order in which real samples are replaced.
        #[arg(long, default_value_t = 0)]
        order_seed: u64,
    },
    /// Nearest corpus samples to a query.
    Retrieve {
        /// Corpus image directory.
        corpus: Option<PathBuf>,
        /// Query image file.
        #[arg(long)]
        query: Option<PathBuf>,
        /// Row of the query feature file (second --features).
        #[arg(long, default_value_t = 0)]
        query_row: usize,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Run an experiment config and write its reports.
    Report { config: PathBuf },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    commands::run(&cli.shared, &cli.command)
}
