//! `tirex` command-line tool.
//!
//! Exit codes: 0 on success, 1 on a usage or input error, 2 when the
//! numerics fail (rank-deficient covariance, eigensolver divergence).

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug)]
pub enum Failure {
    User(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::User(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::User(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<tirex_core::Error> for Failure {
    fn from(e: tirex_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::User(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::User(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::User(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tirex", version, about = "Tail inverse regression for extreme dimension reduction")]
struct Cli {
    /// TOML file with default values for any flag (kebab-case keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from a mixture model and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a dimension-reduction method to a CSV dataset.
    Fit(FitArgs),
    /// Bias/variance/MSE of the subspace estimate over a grid of k.
    #[command(alias = "sweep-k")]
    Sweep(SweepArgs),
    /// Exceedance classification: reduce, then k-nearest-neighbours.
    Classify(ClassifyArgs),
    /// Monte-Carlo check of the tail-process covariance limit.
    VerifyProcess(VerifyArgs),
    /// Tail-conditional-independence ratios of a mixture model.
    TciRatio(TciArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Sweep(_) => "sweep",
            Command::Classify(_) => "classify",
            Command::VerifyProcess(_) => "verify-process",
            Command::TciRatio(_) => "tci-ratio",
        }
    }
}

/// Model selection shared by the simulation-based subcommands.
#[derive(Debug, Args)]
struct ModelArgs {
    /// Preset model: A, B or C.
    #[arg(long)]
    model: Option<String>,
    /// Mixture specification file (TOML, or JSON with a .json extension).
    #[arg(long, conflicts_with = "model")]
    spec: Option<PathBuf>,
}

/// Whitening knobs shared by the fitting subcommands.
#[derive(Debug, Args)]
struct WhitenArgs {
    /// Eigenvalue floor for the covariance: `1e-10` (relative to the
    /// largest eigenvalue) or `abs:1e-8`.
    #[arg(long)]
    eig_floor: Option<String>,
    /// Ridge added to the covariance diagonal before inversion.
    #[arg(long)]
    ridge: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of rows (default: the preset's reference size).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; a JSON sidecar with the mixture spec and seed is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Target column (default `y`).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    whiten: WhitenArgs,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the raw-coordinate basis as CSV.
    #[arg(long)]
    basis_csv: Option<PathBuf>,
    /// Also write the raw-coordinate projector as CSV.
    #[arg(long)]
    projector_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// `lo:hi:count` (geometric) or a comma-separated list; default spans [n/100, n].
    #[arg(long)]
    k_grid: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    whiten: WhitenArgs,
    /// Output CSV with columns k,bias_sq,variance,mse.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the full report with metadata as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Input CSV; alternatively simulate with --model/--spec and --n.
    #[arg(long = "in", conflicts_with_all = ["model", "spec"])]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated methods (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    quantile_level: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    k_grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    whiten: WhitenArgs,
    /// Output CSV with columns method,am_risk,auc,chosen_k.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output JSON report (default: stdout when --out is absent).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Covariate dimension of the independent Gaussian model.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    u_grid: Option<Vec<f64>>,
    /// `c` (first-order process) or `b` (second-order).
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON report (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the covariance entries as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TciArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    y_grid: Option<Vec<f64>>,
    /// Monte-Carlo draws for E|R|.
    #[arg(long)]
    n_mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Light-tail covariates for the pointwise ratios (with --w).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v: Option<Vec<f64>>,
    /// Heavy-tail covariates for the pointwise ratios (with --v).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    w: Option<Vec<f64>>,
    /// Output JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => config::load_config(path)?,
        None => config::RunConfig::default(),
    };
    if let Some(expected) = &cfg.command {
        if expected != cli.command.name() {
            return Err(Failure::User(format!(
                "config is for `{expected}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if jobs == 0 {
            return Err(Failure::User("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::User(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::Fit(a) => commands::fit(a, &cfg),
        Command::Sweep(a) => commands::sweep(a, &cfg),
        Command::Classify(a) => commands::classify(a, &cfg),
        Command::VerifyProcess(a) => commands::verify_process(a, &cfg),
        Command::TciRatio(a) => commands::tci_ratio(a, &cfg),
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
