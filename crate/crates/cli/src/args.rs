use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "virtstain", version, about = "Tile-consistent virtual staining toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render unpaired training tiles and paired evaluation slides.
    Synth(SynthArgs),
    /// Train the CycleGAN from a config file.
    Train(TrainArgs),
    /// Translate one slide with a trained generator.
    Infer(InferArgs),
    /// Pool per-layer normalization statistics over training tiles.
    CollectStats(CollectStatsArgs),
    /// Compare stain densities of real and virtual slides.
    Eval(EvalArgs),
    /// Seam index of a slide for a tile grid.
    Seam(SeamArgs),
    /// Receptive fields of the configured networks.
    Rf(RfArgs),
    /// Finite-difference gradient check of every layer and loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Training tiles per domain.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub tiles: u64,
    /// Evaluation slide pairs.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: u64,
    /// Side of the evaluation slides.
    #[arg(long, default_value_t = 768, value_parser = clap::value_parser!(u64).range(64..))]
    pub size: u64,
    /// Side of the training tiles.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(4..))]
    pub tile_size: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strength of a density component that only domain B sees.
    #[arg(long, default_value_t = 0.0)]
    pub hidden_gain: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `workers` from the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Overrides `iterations` from the config.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Overrides `data_dir` from the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Naive,
    Global,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Domain A to domain B.
    Ab,
    Ba,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    /// Tile size for the naive and global strategies.
    #[arg(long, default_value_t = 512)]
    pub tile: usize,
    #[arg(long, default_value_t = 128)]
    pub effective: usize,
    #[arg(long, default_value_t = 512)]
    pub window: usize,
    /// Statistics table from `collect-stats`; required by the global strategy.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Direction::Ab)]
    pub direction: Direction,
    /// Metrics file; defaults to the output path with extension `metrics.txt`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollectStatsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory of PPM tiles.
    #[arg(long)]
    pub tiles: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Direction::Ab)]
    pub direction: Direction,
    /// Use at most this many tiles (in file name order).
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `pair_*` folders holding the real `b.ppm`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Directory of `<pair id>.ppm` virtual slides.
    #[arg(long = "virtual")]
    pub virtual_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Euclidean RGB tolerance of the stain masks.
    #[arg(long, default_value_t = 60.0)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SeamArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub tile: usize,
    /// Defaults to the tile size.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RfArgs {
    /// Defaults to the built-in configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
