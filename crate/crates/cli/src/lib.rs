//! Command-line front end: instance files, generation, analysis, solving,
//! solver comparison and oracle verification.
//!
//! Every command writes its primary output (a CSV trace or a report) to
//! `--out` or standard output and diagnostics to standard error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod mtx;
pub mod verify;

/// Exit codes shared by all commands.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad usage, unreadable input, or a failed verification check.
    pub const FAILURE: u8 = 1;
    pub const ITERATION_LIMIT: u8 = 2;
    pub const SOLVER_FAULT: u8 = 3;
}

/// Default cap on the system size for which a dense reference is computed.
pub const DENSE_REFERENCE_LIMIT: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "walksolve", version, about = "Distributed message-passing solver for walk-summable linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a generated instance as a Matrix Market file and an rhs file.
    Generate(GenerateArgs),
    /// Report dominance and walk-summability of an instance.
    Analyze(InstanceArgs),
    /// Solve an instance and write the convergence trace as CSV.
    Solve(SolveArgs),
    /// Run bp, jacobi and consensus side by side against a dense reference.
    Compare(CompareArgs),
    /// Run the oracle checks over a seeded ensemble.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Example1Tree,
    LoopySmall,
    RandomSparse,
    Path,
    Star,
    RandomTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bp,
    Jacobi,
    GaussSeidel,
    Consensus,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bp => "bp",
            Self::Jacobi => "jacobi",
            Self::GaussSeidel => "gauss-seidel",
            Self::Consensus => "consensus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Dense,
    None,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "example1-tree")]
    pub kind: Kind,
    #[arg(long, default_value_t = 7)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Expected degree for random-sparse.
    #[arg(long, default_value_t = 6.0)]
    pub avg_degree: f64,
    /// Matrix Market output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Right-hand-side output path; defaults to `--out` with extension `rhs`.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// One real per line; `b = 0` when omitted.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bp")]
    pub method: Method,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    /// Stop once no estimate moves by more than `tol * max(1, max_i |x_i|)`.
    #[arg(long, default_value_t = 1e-8, value_parser = positive_real)]
    pub tol: f64,
    /// Run bp even when the system is not certified walk-summable.
    #[arg(long)]
    pub force: bool,
    /// Error column source; dense by default up to n = 5000.
    #[arg(long, value_enum)]
    pub reference: Option<Reference>,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the final estimate, one value per line.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// First seed of the ensemble.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest instance size.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(3..))]
    pub n: u64,
    /// Instances per check.
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run message passing with a deliberately wrong add-back sign, to show
    /// that the checks catch it.
    #[arg(long, hide = true)]
    pub mutate_add_back: bool,
}

fn positive_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive finite number")),
        Err(e) => Err(e.to_string()),
    }
}
