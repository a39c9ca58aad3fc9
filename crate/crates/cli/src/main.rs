//! `brenier` command-line front end.
//!
//! Exit codes: 0 on success (or acceptance for `test`/`wine`), 2 when a test rejects,
//! 1 on any error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "brenier",
    version,
    about = "Brenier distribution functions and the two-sample Wasserstein permutation test"
)]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; standard output when omitted. A run manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a point grid in the unit ball.
    Grid(GridArgs),
    /// Solve an optimal transport problem between two point files.
    Transport(TransportArgs),
    /// Fit an empirical BDF of a sample onto a grid.
    Fit(FitArgs),
    /// Evaluate a fitted model at query points.
    Eval(EvalArgs),
    /// Two-sample test between two point files.
    Test(TestArgs),
    /// Resampled null distribution and critical value for given sizes.
    Quantile(QuantileArgs),
    /// Run a Monte-Carlo experiment from a YAML config.
    Experiment(ExperimentArgs),
    /// Test two quality groups of a wine-quality CSV.
    Wine(WineArgs),
    /// Repeat the run recorded in a manifest and check the output is unchanged.
    Rerun(RerunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub dim: usize,
    /// iid, sobol_radial or lloyd.
    #[arg(long, default_value = "sobol_radial")]
    pub method: String,
    #[arg(long, default_value_t = 0)]
    pub lloyd_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Assign,
    Lp,
}

#[derive(Debug, Args, Serialize)]
pub struct TransportArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "assign")]
    pub mode: TransportMode,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub sample: PathBuf,
    /// One label per line (`X`/`Y` or `0`/`1`); every point is `X` when omitted.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Grid CSV (its `.json` sidecar is picked up when present) or grid JSON.
    #[arg(long)]
    pub grid: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    #[arg(long, default_value = "sobol_radial")]
    pub grid_method: String,
    #[arg(long, default_value_t = 0)]
    pub lloyd_iters: usize,
    /// Skip pooled per-coordinate z-scoring.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub null_cache: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct QuantileArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    #[arg(long, default_value = "sobol_radial")]
    pub grid_method: String,
    #[arg(long, default_value_t = 0)]
    pub lloyd_iters: usize,
    #[arg(long)]
    pub null_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gc,
    Pivotality,
    Type1,
    Power,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct WineArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value = "5")]
    pub group_a: String,
    #[arg(long, default_value = "7")]
    pub group_b: String,
    #[arg(long, default_value = "quality")]
    pub label_column: String,
    /// Per-group subsample size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Size of the second group's subsample; defaults to `n`.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    #[arg(long, default_value = "sobol_radial")]
    pub grid_method: String,
    /// Field delimiter; detected when omitted.
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub null_cache: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Successful completion; `Reject` maps to exit code 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Reject,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    // clap's own usage-error code is 2, which is reserved for rejections here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli, argv) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Reject) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
