//! `wprox`: measure distances, proximal steps, discrete flows and inequality checks from the
//! command line. Exit codes: 0 success, 1 residual violation or failed run, 2 usage or
//! validation error.

mod commands;
mod config;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "wprox", version, about = "Discrete Wasserstein proximal steps and gradient flows on the line")]
struct Cli {
    /// Output directory (default: $WPROX_OUT, else the working directory).
    #[arg(long, global = true, env = "WPROX_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// W2 distance and optimal map summary between two measure files.
    Dist(DistArgs),
    /// One proximal step; writes a JSON summary and the proximal point.
    Prox(ProxArgs),
    /// Discrete flow; writes a CSV trace.
    Flow(FlowArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Run an experiment described by a TOML file.
    Run(RunArgs),
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Solver stopping tolerance on the projected gradient norm (default 1e-10 sqrt(n)).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Grid size for generated measures.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
}

#[derive(Args)]
pub struct DistArgs {
    #[arg(long)]
    pub mu: PathBuf,
    #[arg(long)]
    pub nu: PathBuf,
    /// Print a JSON record instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct ProxArgs {
    /// Functional: quad:lambda=L, renyi:p=P, entropy, indicator:file=PATH.
    #[arg(long = "f")]
    pub functional: String,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, conflicts_with = "barenblatt")]
    pub mu: Option<PathBuf>,
    /// Start from the Barenblatt profile, e.g. `r=1`.
    #[arg(long)]
    pub barenblatt: Option<String>,
    /// File name stem for outputs.
    #[arg(long, default_value = "prox")]
    pub name: String,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args)]
pub struct FlowArgs {
    #[arg(long = "f")]
    pub functional: String,
    #[arg(long, required_unless_present = "expformula")]
    pub tau: Option<f64>,
    #[arg(long, required_unless_present = "expformula")]
    pub steps: Option<usize>,
    #[arg(long, conflicts_with = "init")]
    pub mu: Option<PathBuf>,
    /// Generated initial measure, e.g. `barenblatt:r=1`.
    #[arg(long)]
    pub init: Option<String>,
    /// Second initial measure; runs paired flows.
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Reference measure for the `w2_ref` column of single flows.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Rescale iterates by the Barenblatt time and compare with the stationary profile.
    #[arg(long, conflicts_with_all = ["nu", "expformula"])]
    pub rescale: bool,
    /// Exponential formula probe at time `t=T`.
    #[arg(long, conflicts_with = "nu")]
    pub expformula: Option<String>,
    /// Step counts for the exponential formula probe.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256,512,1024")]
    pub ns: Vec<usize>,
    /// Use the numeric solver even where a closed form exists.
    #[arg(long)]
    pub force_numeric: bool,
    /// Trace file name (inside the output directory unless absolute).
    #[arg(long, default_value = "flow.csv")]
    pub output: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// contraction, poslam, modified, envelope, rok, gronwall, decay, banach or all.
    pub suite: String,
    #[arg(long = "f")]
    pub functional: Option<String>,
    /// Number of random instances.
    #[arg(long, default_value_t = 100)]
    pub random: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Convexity modulus for the quadratic-family suites.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Check a specific pair instead of random instances.
    #[arg(long, requires = "nu")]
    pub mu: Option<PathBuf>,
    #[arg(long, requires = "mu")]
    pub nu: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Also write every report as JSON lines to `<suite>-reports.jsonl`.
    #[arg(long)]
    pub reports: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
    let result = match cli.command {
        Command::Dist(a) => commands::dist(&a),
        Command::Prox(a) => commands::prox(&a, &out),
        Command::Flow(a) => commands::flow(&a, &out),
        Command::Verify(a) => commands::verify(&a, &out),
        Command::Run(a) => commands::run(&a, &out),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
