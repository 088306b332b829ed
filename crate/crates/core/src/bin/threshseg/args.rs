use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use threshseg::oracle::PhantomKind;
use threshseg::{InitStrategy, SolverConfig};

#[derive(Debug, Parser)]
#[command(
    name = "threshseg",
    version,
    about = "Multi-phase image segmentation by heat-kernel thresholding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image.
    Segment(SegmentArgs),
    /// Write a synthetic phantom and its ground-truth label map.
    Phantom(PhantomArgs),
    /// Segment one image over a grid of lambda and dt values.
    Sweep(SweepArgs),
    /// Time solver iterations on phantoms of several sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u16).range(2..))]
    pub phases: u16,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.003)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value = "circles", value_parser = parse_init)]
    pub init: InitStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub assert_decay: Switch,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            phases: self.phases as usize,
            dt: self.dt,
            lambda: self.lambda,
            tau: self.tau,
            max_iter: self.max_iter,
            init: self.init,
            seed: self.seed,
            assert_decay: self.assert_decay == Switch::On,
        }
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// PNG, PGM (P5) or PPM (P6) image.
    #[arg(long, required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    /// Ground-truth label map for misclassification scoring.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Replay the input and solver settings recorded in a manifest.json.
    #[arg(long, conflicts_with = "input")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: PhantomKind,
    #[arg(long, default_value_t = 256, value_parser = parse_size)]
    pub size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated lambda values.
    #[arg(long = "lambda", value_delimiter = ',', num_args = 0..)]
    pub lambdas: Vec<f64>,
    /// Comma-separated dt values.
    #[arg(long = "dt", value_delimiter = ',', num_args = 0..)]
    pub dts: Vec<f64>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u16).range(2..))]
    pub phases: u16,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value = "circles", value_parser = parse_init)]
    pub init: InitStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub assert_decay: Switch,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated phantom sizes.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512", value_parser = parse_size)]
    pub sizes: Vec<usize>,
    /// Timed iterations per size, after one warm-up iteration.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(5..))]
    pub reps: u32,
    #[arg(long, default_value = "four-quadrant", value_parser = parse_kind)]
    pub kind: PhantomKind,
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.003)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
}

fn parse_init(s: &str) -> Result<InitStrategy, String> {
    s.parse().map_err(|e: threshseg::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<PhantomKind, String> {
    s.parse().map_err(|e: threshseg::Error| e.to_string())
}

fn parse_size(s: &str) -> Result<usize, String> {
    let n: usize = s.trim().parse().map_err(|e| format!("{e}"))?;
    if n < 16 {
        return Err(format!("size must be >= 16, got {n}"));
    }
    Ok(n)
}
