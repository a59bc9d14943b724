//! Command-line front end: simulation, fitting, prediction and evaluation
//! over CSV and JSON files.

pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod split;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, EXIT_INPUT, EXIT_NUMERIC};

#[derive(Debug, Parser)]
#[command(name = "gwr", version, about = "Gaussian-to-Gaussian regression in the Wasserstein space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo scenario and write per-run records and a summary.
    Simulate(SimulateArgs),
    /// Fit a regression model to a long-format CSV.
    Fit(FitArgs),
    /// Predict response Gaussians for the predictor rows of a CSV.
    Predict(PredictArgs),
    /// Summarize Wasserstein discrepancies between predictions and observations.
    Eval(EvalArgs),
    /// Empirical Fréchet mean of the per-unit Gaussians of one role.
    Barycenter(BarycenterArgs),
    /// Write a synthetic long-format dataset from the mixture generator.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["config", "preset"]))]
pub struct SimulateArgs {
    /// Scenario configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: fig2-desk, fig3-desk or fig4-desk.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured number of runs.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output directory for runs.csv, summary.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Basic,
    Lowrank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Predictor,
    Response,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Long-format CSV with header unit_id,role,c1,...,cd.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "basic")]
    pub kind: KindArg,
    /// Rank K, required with --kind lowrank.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Training units: all, first:<k>, last:<k>, upto:<unit_id> or after:<unit_id>.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Seed for the low-rank random restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random restarts for the low-rank fit.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Standardize each coordinate by its pooled training mean and standard deviation.
    #[arg(long)]
    pub standardize: bool,
    /// Accept a single training unit, which the model interpolates.
    #[arg(long)]
    pub allow_single_unit: bool,
    /// Output directory for model.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `gwr fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Long-format CSV; only predictor rows are used.
    #[arg(long)]
    pub data: PathBuf,
    /// Units to predict, same rules as `gwr fit`.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Output directory for predictions.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions CSV written by `gwr predict`.
    #[arg(long)]
    pub predicted: PathBuf,
    /// Observed responses: a long-format CSV or a measure CSV.
    #[arg(long)]
    pub observed: PathBuf,
    /// Optional output directory for summary.csv, discrepancies.csv and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BarycenterArgs {
    /// Long-format CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "predictor")]
    pub role: RoleArg,
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Optional output directory for barycenter.csv and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of units (labelled as consecutive years).
    #[arg(long, default_value_t = 60)]
    pub units: usize,
    /// Draws per unit and role.
    #[arg(long, default_value_t = 92)]
    pub draws: usize,
    /// Dimension of both roles.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// First unit label.
    #[arg(long, default_value_t = 1953)]
    pub first_year: i64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for data.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Applies `GWR_THREADS` to the global thread pool.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("GWR_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::input(format!("GWR_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::input(format!("GWR_THREADS: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Barycenter(a) => commands::barycenter(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}
