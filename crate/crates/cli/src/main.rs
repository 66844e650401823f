//! `diversify`: batch runs of the diversification study.
//!
//! Exit codes: 0 success (infeasible tolerance pairs included), 2 usage or
//! validation error, 3 data error, 4 a required baseline did not converge.

mod artifacts;
mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
    NonConvergence(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::NonConvergence(m) => write!(f, "solver did not converge: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "diversify", version, about = "Scenario-based ROI portfolio optimization with HHI diversification")]
struct Cli {
    /// TOML file overriding built-in defaults (sections: generator,
    /// constraints, risk, solver, grids, suite).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario set.
    Generate(GenerateArgs),
    /// Baseline efficient frontier over a w grid.
    Frontier(FrontierArgs),
    /// HHI-penalty sweep over w and w_d.
    DiversifyPenalty(PenaltyArgs),
    /// Tolerance-pair perturbation suite around each baseline.
    DiversifyConstrained(ConstrainedArgs),
    /// Exact metrics of a portfolio.
    Evaluate(EvaluateArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Scenario JSON file, or a directory holding returns.csv and
    /// investments.csv. Defaults to the configured generator.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Tail confidence level.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Generator spec (TOML); defaults to the configured generator.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated risk-aversion weights.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PenaltyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<String>,
    /// Comma-separated HHI penalty weights.
    #[arg(long, allow_hyphen_values = true)]
    pub wd: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstrainedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<String>,
    /// Rectangle half-widths, e.g. `a=0.1,b=0.1`.
    #[arg(long)]
    pub rect: Option<String>,
    /// Pairs per zone s1,s2,s3, e.g. `4,2,2`.
    #[arg(long)]
    pub counts: Option<String>,
    /// Weight of the tail term in the objective.
    #[arg(long)]
    pub wr: Option<f64>,
    /// Seed of the tolerance-pair draws.
    #[arg(long)]
    pub pair_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON `{"x": [...], "budget": B}` or a bare array of quantities.
    #[arg(long)]
    pub portfolio: PathBuf,
    /// Also write evaluate.json and a manifest here.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    /// Dataset to load on startup; without it the server waits for
    /// `PUT /api/dataset` unless `--generate` is given.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Load the configured synthetic instance on startup.
    #[arg(long)]
    pub generate: bool,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Per-request solver budget in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub time_budget: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::generate(cfg, &a),
        Command::Frontier(a) => commands::frontier(cfg, &a),
        Command::DiversifyPenalty(a) => commands::penalty(cfg, &a),
        Command::DiversifyConstrained(a) => commands::constrained(cfg, &a),
        Command::Evaluate(a) => commands::evaluate(cfg, &a),
        Command::Serve(a) => commands::serve(cfg, &a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diversify: {e}");
            ExitCode::from(e.code())
        }
    }
}
