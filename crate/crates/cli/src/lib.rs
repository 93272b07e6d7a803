//! The `voxcolor` command line.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "voxcolor", version, about = "Point cloud color upsampling")]
pub struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults for any subcommand; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus manifest.
    Gen(GenArgs),
    /// Train a network on a manifest's train split.
    Train(TrainArgs),
    /// Color an HR geometry from a colored LR cloud.
    Upsample(UpsampleArgs),
    /// Score methods against ground truth on a manifest split.
    Eval(EvalArgs),
    /// Measure latency against cloud size and fit a line.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Manifest path to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of objects (default 200).
    #[arg(long)]
    pub count: Option<usize>,
    /// HR grid extent of synthetic objects.
    #[arg(long)]
    pub extent: Option<u32>,
    /// Expected occupied voxels per object.
    #[arg(long)]
    pub target_points: Option<usize>,
    /// Share of objects in the train split (default 0.8).
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Share of objects in the val split (default 0.1).
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Also write every object as a PLY under this directory and point the
    /// manifest at the files.
    #[arg(long)]
    pub export_ply: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest written by `gen`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Voxelization ratio (default 5).
    #[arg(long)]
    pub ratio: Option<u32>,
    /// Per-epoch CSV log (default: next to the checkpoint).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Overrides the per-ratio default (25).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Objects per step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Feature width K.
    #[arg(long)]
    pub channels: Option<usize>,
    /// Residual blocks in the feature extractor.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Initial Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// L2 penalty added to the gradient.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<voxcolor::tensor::Precision>,
}

#[derive(Debug, Args)]
pub struct UpsampleArgs {
    /// Colored LR cloud.
    #[arg(long)]
    pub lr: PathBuf,
    /// HR geometry; colors in the file are ignored.
    #[arg(long)]
    pub hr: PathBuf,
    /// Voxel size v relating the two clouds.
    #[arg(long)]
    pub ratio: u32,
    /// devox, nn, knn[:k], waan[:radius] or cunet.
    #[arg(long, default_value = "devox")]
    pub method: String,
    /// Trained network, required for cunet.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Colored HR cloud to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus manifest written by `gen`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods (default devox,knn,waan, plus cunet when a
    /// checkpoint is given).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated test ratios (default 5).
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<u32>>,
    /// Checkpoint for cunet; repeat to compare several.
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// train, val or test (default test).
    #[arg(long)]
    pub split: Option<String>,
    /// Per-object CSV report.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON (default: the report path with a .json extension).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated HR point counts (default 50k to 800k, doubling).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Method to time (default cunet).
    #[arg(long)]
    pub method: Option<String>,
    /// For cunet; without one a freshly initialized network of the
    /// per-ratio default width is timed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Voxel size v (default 5).
    #[arg(long)]
    pub ratio: Option<u32>,
    /// Timed runs per size; the median is kept (default 3).
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Per-size CSV report.
    #[arg(long)]
    pub out: PathBuf,
    /// Gnuplot data file (default: the report path with a .dat extension).
    #[arg(long)]
    pub dat: Option<PathBuf>,
}

/// Failure of a command: bad usage exits with 2, anything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] voxcolor::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Run(e) => e.category(),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        voxcolor::exec::init_threads(n);
    }
    let ctx = commands::Context {
        seed: cli.seed.or(file.seed),
        file,
        config_text: match &cli.config {
            Some(p) => std::fs::read_to_string(p).ok(),
            None => None,
        },
    };
    match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Upsample(a) => commands::upsample(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
    }
}
