use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "nddid", version, about = "Nonparametric difference-in-differences estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Log filter, e.g. `warn` or `nddid=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study on the synthetic setups.
    Simulate(SimulateArgs),
    /// Estimate the effect on a CSV dataset.
    Estimate(EstimateArgs),
    /// Estimate on placebo-period data and flag intervals that contain zero.
    Placebo(EstimateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Estimation settings that can also come from the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    #[arg(long)]
    pub k_folds: Option<usize>,
    #[arg(long)]
    pub basis_max_order: Option<usize>,
    #[arg(long)]
    pub propensity_max_order: Option<usize>,
    #[arg(long)]
    pub amle_basis_max_order: Option<usize>,
    #[arg(long)]
    pub additive_max_order: Option<usize>,
    #[arg(long)]
    pub propensity_additive_max_order: Option<usize>,
    /// Comma-separated penalty grid.
    #[arg(long)]
    pub ridge_lambdas: Option<String>,
    #[arg(long)]
    pub propensity_penalty: Option<f64>,
    #[arg(long)]
    pub eta_clip: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub qp_tol: Option<f64>,
    #[arg(long)]
    pub qp_max_iter: Option<usize>,
    #[arg(long)]
    pub sigma2_override: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML or JSON file with any of the settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Comma-separated setup ids (A-F).
    #[arg(long)]
    pub setup: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    #[arg(long)]
    pub state_col: Option<String>,
    #[arg(long)]
    pub time_col: Option<String>,
    /// Comma-separated; defaults to every other column.
    #[arg(long)]
    pub covariate_cols: Option<String>,
    /// Keep rows with `col=value`; repeatable.
    #[arg(long)]
    pub filter: Vec<String>,
    /// Write the balancing weights as CSV (index, gamma).
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}
