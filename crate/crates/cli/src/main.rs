mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Radar + RGB fusion experiments: synthetic scenes, target generation,
/// evaluation and oracle self-checks.
#[derive(Debug, Parser)]
#[command(name = "ranet", version)]
pub struct Cli {
    /// JSON config file with optional `synth`, `pipeline` and `compare` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation and for the pipeline.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path. Reports go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the logical core count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene file.
    GenScenes(GenArgs),
    /// Run the pipeline over a scene file, optionally comparing two configs.
    Run(RunArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Compare optimized routines against brute-force oracles.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Uniform,
    Edges,
    Top,
    Bottom,
    Left,
    Right,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Uniform,
    AnchorLike,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: Option<usize>,
    /// Square image side in pixels.
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub p_hit: Option<f64>,
    #[arg(long, value_enum)]
    pub placement: Option<PlacementArg>,
    /// Radar point jitter std in pixels.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub min_boxes: Option<usize>,
    #[arg(long)]
    pub max_boxes: Option<usize>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ffpn,
    Ranet,
    Biranet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BestOfTwoArg {
    PerGt,
    Pairwise,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scene file produced by `gen-scenes` or hand-written.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub best_of_two: Option<BestOfTwoArg>,
    /// Apply the blur + Gaussian noise setting to the primary config.
    #[arg(long)]
    pub noise: bool,
    /// Skip the convolutional path.
    #[arg(long)]
    pub geometric: bool,
    /// Second config: same as the first with this mode.
    #[arg(long, value_enum)]
    pub compare_mode: Option<ModeArg>,
    /// Second config: same as the first with center-only radar anchors.
    #[arg(long)]
    pub compare_center_only: bool,
    /// Second config: same as the first with noise toggled.
    #[arg(long)]
    pub compare_noise: bool,
    /// Write each scene's full output (with intermediates) into this directory.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON list of detections.
    #[arg(long)]
    pub dets: PathBuf,
    /// Scene file or JSON list of ground-truth boxes.
    #[arg(long)]
    pub gts: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Scene file to check on instead of the built-in fixtures.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Random cases per routine.
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Usage(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
