use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "switchjump", version, about = "Simulate and analyze regime-switching jump diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Simulate sample paths and write them as CSV.
    Simulate(SimulateArgs),
    /// Run stability analyses and write a JSON report with CSV tables.
    Analyze(AnalyzeArgs),
    /// Compare finite-difference quotients with the variational process.
    Sensitivity(SensitivityArgs),
    /// Re-run a command from its manifest.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Built-in example: ex61 or ex62.
    #[arg(long)]
    pub example: Option<String>,
    /// JSON model configuration.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RunArgs {
    /// Horizon.
    #[arg(long = "T", default_value_t = 10.0, allow_hyphen_values = true)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3, allow_hyphen_values = true)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record every k-th grid step; by default about 100 grid rows (1 for `simulate`).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Initial state, comma separated (default 1 in every component; 1e-30 for `analyze` on ex62).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial regime, one-based.
    #[arg(long, default_value_t = 1)]
    pub regime: usize,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Linearized stability sum (and the scalar sharp exponent).
    #[arg(long)]
    pub criterion: bool,
    /// Stationary distribution of the generator at the origin.
    #[arg(long)]
    pub stationary: bool,
    /// p-th moment exponent.
    #[arg(long, value_name = "P")]
    pub moment_exponent: Option<f64>,
    /// Almost-sure exponent.
    #[arg(long)]
    pub as_exponent: bool,
    /// Lyapunov scan described by a JSON spec.
    #[arg(long, value_name = "SPEC")]
    pub lyapunov_scan: Option<PathBuf>,
    /// Exceedance probabilities P(|X(t)| >= R).
    #[arg(long)]
    pub p1: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,5,10")]
    pub radii: Vec<f64>,
    /// Coupled-pair contraction from x0 and y0.
    #[arg(long)]
    pub p2: bool,
    /// Second start for --p2 (default x0 / 2).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y0: Option<Vec<f64>>,
    /// Second start regime for --p2, one-based (default --regime).
    #[arg(long)]
    pub j0: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1")]
    pub eps: Vec<f64>,
    /// Distances between the laws of (X(t), α(t)) across times and starts.
    #[arg(long)]
    pub dist_conv: bool,
    /// Starts for --dist-conv as x:regime pairs (default x0 in every regime).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub starts: Option<Vec<String>>,
    /// Checkpoints for --dist-conv (default T/4, T/2, T).
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<f64>>,
}

impl AnalyzeArgs {
    pub fn selected_count(&self) -> usize {
        [
            self.criterion,
            self.stationary,
            self.moment_exponent.is_some(),
            self.as_exponent,
            self.lyapunov_scan.is_some(),
            self.p1,
            self.p2,
            self.dist_conv,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Perturbations of x0 (default 0.1, 0.01, 0.001).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory (default: the recorded one).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const DEFAULT_DELTAS: [f64; 3] = [1e-1, 1e-2, 1e-3];
