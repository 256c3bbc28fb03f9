use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ghp", version, about = "Simulate, learn and evaluate graphon-based Hawkes processes")]
pub struct Cli {
    /// Worker threads (default: available cores); GHP_THREADS overrides.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw random graphon parameters.
    Init(InitArgs),
    /// Sample Hawkes models from a graphon and simulate one sequence from each.
    Simulate(SimulateArgs),
    /// Learn a graphon from a sequence corpus.
    Learn(LearnArgs),
    /// Hierarchical transport distance between two sequence files.
    Distance(DistanceArgs),
    /// Evaluation tools.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args, Serialize)]
pub struct InitArgs {
    /// Fourier order of g.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    #[arg(long, default_value_t = 20)]
    pub vmax: usize,
    /// Rate of the exponential decay kernel.
    #[arg(long, default_value_t = 1.0)]
    pub kernel_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// `auto` or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum VmaxArg {
    Auto,
    Fixed(usize),
}

impl FromStr for VmaxArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(VmaxArg::Auto);
        }
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(VmaxArg::Fixed(v)),
            _ => Err(format!("expected `auto` or a positive integer, got `{s}`")),
        }
    }
}

/// `auto` or a positive real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BetaArg {
    Auto,
    Fixed(f64),
}

impl FromStr for BetaArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(BetaArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(b) if b.is_finite() && b > 0.0 => Ok(BetaArg::Fixed(b)),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Hot,
    Raml,
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value = "auto")]
    pub vmax: VmaxArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Hot)]
    pub method: MethodArg,
    /// Temperature of the exponential payoff (raml method).
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Sinkhorn regularization of the hierarchical distance.
    #[arg(long, default_value = "auto")]
    pub beta: BetaArg,
    /// Fourier order of the learned g.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub kernel_rate: f64,
    /// Simulation window (default: longest training horizon).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ground-truth model for the per-epoch FGW distance.
    #[arg(long)]
    pub ref_model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub fgw_grid: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "auto")]
    pub beta: BetaArg,
    /// Include every inner type coupling in the output.
    #[arg(long)]
    pub plans: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// FGW distance between two graphon models.
    Fgw(FgwArgs),
    /// Hierarchical transport distance from simulated sequences to a test set.
    Dot(DotArgs),
    /// Estimate latent coordinates of the event types of a test set.
    Align(AlignArgs),
    /// Check the stability bounds on sampled model pairs.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FgwArgs {
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Output JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DotArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Number of simulated sequences (default: size of the test set).
    #[arg(long)]
    pub ngen: Option<usize>,
    /// Simulation window (default: longest test horizon).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub beta: BetaArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    #[arg(long)]
    pub ngen: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto")]
    pub beta: BetaArg,
    /// Pool landmarks over all real sequences for each type.
    #[arg(long)]
    pub all_pairs: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2048)]
    pub lipschitz_grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}
