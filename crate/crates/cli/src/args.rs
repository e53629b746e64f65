use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gpx::benchmarks::Problem;
use gpx::CategoricalKernel;

#[derive(Debug, Parser)]
#[command(name = "gpx", version, about = "Fit GP surrogates over mixed inputs and explain them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a benchmark problem into data.csv and space.json
    Benchmark(BenchmarkArgs),
    /// Fit a GP on a train/holdout split and write model.json
    Fit(FitArgs),
    /// Compute explanation blocks for a fitted model
    Explain(ExplainArgs),
    /// GP and split conformal intervals on validation points
    Conformal(ConformalArgs),
    /// Benchmark or dataset through fit, explain and conformal in one run
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SourceArgs {
    /// Benchmark problem to sample instead of reading --space/--data
    #[arg(long, conflicts_with_all = ["space", "data"])]
    pub benchmark: Option<Problem>,
    /// Number of benchmark samples
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Feature space JSON
    #[arg(long, requires = "data")]
    pub space: Option<PathBuf>,
    /// Dataset CSV (features in declaration order, then `response`)
    #[arg(long, requires = "space")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitSettings {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Categorical kernel
    #[arg(long, default_value = "hh")]
    pub kernel: CategoricalKernel,
    /// Training fraction; the rest is the test and calibration holdout
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    /// Optimizer starts
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    pub problem: Problem,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub fit: FitSettings,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write wall-clock timings to timings.json
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Pdp,
    Ice,
    Shap,
    Sobol,
    Importance,
    Correlation,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExplainSettings {
    /// Blocks to compute (comma separated). Without it `explain` writes only
    /// metadata and `report` runs every applicable block
    #[arg(long, value_delimiter = ',')]
    pub explain: Vec<Selection>,
    #[arg(long, default_value_t = gpx::pdp::DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    /// KernelSHAP coalition budget. When omitted, SHAP is exact for up to 15
    /// features and KernelSHAP with 2048 coalitions beyond that
    #[arg(long)]
    pub n_coalitions: Option<usize>,
    #[arg(long, default_value_t = gpx::sobol::DEFAULT_N_BASE)]
    pub n_base: usize,
    /// Reference level for a categorical feature, as FEATURE=LEVEL
    #[arg(long = "reference")]
    pub reference: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub settings: ExplainSettings,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConformalSettings {
    #[arg(long, default_value_t = gpx::conformal::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Fresh validation points drawn for benchmark models
    #[arg(long, default_value_t = 300)]
    pub n_validation: usize,
    /// One single-feature GP and interval CSV per feature
    #[arg(long)]
    pub single_feature: bool,
}

#[derive(Debug, Args)]
pub struct ConformalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub settings: ConformalSettings,
    /// Validation CSV; the `response` column is optional
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub fit: FitSettings,
    #[command(flatten)]
    pub explain: ExplainSettings,
    #[command(flatten)]
    pub conformal: ConformalSettings,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timings: bool,
}
