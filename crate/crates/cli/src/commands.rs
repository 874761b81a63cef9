//! Command implementations. Each returns the process exit code; errors that
//! prevent a command from running at all surface as [`CliError`].

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walksolve::analysis::analyze;
use walksolve::dense::dense_solve;
use walksolve::engine::ConvergenceTrace;
use walksolve::generate::{generate_instance, GenerateError, GeneratorKind, GeneratorSpec};
use walksolve::solvers::{
    bp_solve, consensus_solve, gauss_seidel_solve, jacobi_solve, Solution, SolveConfig, SolveError,
};
use walksolve::{SparseSystem, UndirectedGraph};

use crate::mtx::{self, MtxError};
use crate::{
    exit, verify, Cli, Command, CompareArgs, GenerateArgs, InstanceArgs, Kind, Method, Reference,
    SolveArgs, DENSE_REFERENCE_LIMIT,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Instance(#[from] MtxError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write to standard output: {0}")]
    Stdout(std::io::Error),
    #[error("{0}")]
    Usage(String),
}

/// Runs a parsed command line, reporting errors on standard error.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Analyze(a) => analyze_cmd(&a),
        Command::Solve(a) => solve(&a),
        Command::Compare(a) => compare(&a),
        Command::Verify(a) => verify::run(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit::FAILURE
    })
}

/// Writes `text` to `path`, or to standard output when there is none.
pub(crate) fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(CliError::Stdout)
        }
    }
}

/// 17 significant digits; `inf`, `-inf` and `NaN` spelled out.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn generator_kind(kind: Kind) -> GeneratorKind {
    match kind {
        Kind::Example1Tree => GeneratorKind::Example1Tree,
        Kind::LoopySmall => GeneratorKind::LoopySmall,
        Kind::RandomSparse => GeneratorKind::RandomSparse,
        Kind::Path => GeneratorKind::Path,
        Kind::Star => GeneratorKind::Star,
        Kind::RandomTree => GeneratorKind::RandomTree,
    }
}

/// The random-sparse kind uses the large-scale recipe (unit diagonal, small
/// couplings); every other kind uses the small-instance recipe.
pub fn generator_spec(kind: Kind, n: usize, seed: u64, avg_degree: f64) -> GeneratorSpec {
    let base = match kind {
        Kind::RandomSparse => GeneratorSpec::example3(n, avg_degree, seed),
        _ => GeneratorSpec::example1(seed),
    };
    GeneratorSpec {
        kind: generator_kind(kind),
        n,
        ..base
    }
}

fn generate(a: &GenerateArgs) -> Result<u8, CliError> {
    let sys = generate_instance(&generator_spec(a.kind, a.n, a.seed, a.avg_degree))?;
    let rhs = a.rhs.clone().unwrap_or_else(|| a.out.with_extension("rhs"));
    mtx::write_system(&sys, &a.out, &rhs)?;
    eprintln!("wrote {} and {}", a.out.display(), rhs.display());
    Ok(exit::OK)
}

fn analyze_cmd(a: &InstanceArgs) -> Result<u8, CliError> {
    let sys = mtx::read_system(&a.matrix, a.rhs.as_deref())?;
    let g = UndirectedGraph::induced(&sys);
    let rep = analyze(&sys);
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k}={v}").expect("writing to a String");
    line("n", sys.n().to_string());
    line("nnz", sys.matrix().nnz().to_string());
    line("edges", g.edge_count().to_string());
    line("components", g.connected_components().len().to_string());
    line("acyclic", g.is_acyclic().to_string());
    line("diameter", g.diameter().to_string());
    line("diag_dominant", rep.diag_dominant.to_string());
    line("rho_abs", fmt_real(rep.rho_abs));
    line("walk_summable", rep.walk_summable.as_str().to_string());
    line(
        "scaling_certificate",
        if rep.scaling.is_some() { "found" } else { "none" }.to_string(),
    );
    emit(a.out.as_deref(), &s)?;
    Ok(exit::OK)
}

/// Dense reference when requested, or by default for `n <= 5000`.
fn reference(sys: &SparseSystem, choice: Option<Reference>) -> Option<Vec<f64>> {
    let want = choice.unwrap_or(if sys.n() <= DENSE_REFERENCE_LIMIT {
        Reference::Dense
    } else {
        Reference::None
    });
    match want {
        Reference::None => None,
        Reference::Dense => match dense_solve(sys) {
            Ok(x) => Some(x),
            Err(e) => {
                eprintln!("warning: no dense reference ({e}); error column left empty");
                None
            }
        },
    }
}

fn run_method(method: Method, sys: &SparseSystem, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    match method {
        Method::Bp => bp_solve(sys, cfg),
        Method::Jacobi => jacobi_solve(sys, cfg),
        Method::GaussSeidel => gauss_seidel_solve(sys, cfg),
        Method::Consensus => consensus_solve(sys, cfg),
    }
}

pub const SOLVE_HEADER: &str = "iter,log10_mse,max_delta,messages";

/// Trace CSV: a comment naming the method and execution mode, the header,
/// then one row per completed round.
pub fn trace_csv(method: Method, trace: &ConvergenceTrace) -> String {
    let mode = match method {
        Method::GaussSeidel => "sequential-reference",
        _ => "distributed",
    };
    let mut s = format!("# method={} mode={mode}\n{SOLVE_HEADER}\n", method.name());
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in &trace.rounds {
        writeln!(
            s,
            "{},{},{},{}",
            r.k,
            opt(r.log10_mse),
            opt(r.max_delta),
            r.accounting.messages_sent
        )
        .expect("writing to a String");
    }
    s
}

fn solve(a: &SolveArgs) -> Result<u8, CliError> {
    let sys = mtx::read_system(&a.matrix, a.rhs.as_deref())?;
    let cfg = SolveConfig::new(a.max_iters as usize, a.tol)
        .forced(a.force)
        .with_reference(reference(&sys, a.reference));
    match run_method(a.method, &sys, &cfg) {
        Ok(sol) => {
            if let Some(w) = &sol.warning {
                eprintln!(
                    "warning: forced run on a system that is not certified walk-summable (verdict {}, rho(|R|) = {})",
                    w.verdict.as_str(),
                    w.rho_abs
                );
            }
            emit(a.out.as_deref(), &trace_csv(a.method, &sol.trace))?;
            if let Some(p) = &a.solution {
                emit(Some(p), &mtx::format_rhs(&sol.x))?;
            }
            if sol.converged {
                eprintln!("converged after {} iterations", sol.rounds());
                Ok(exit::OK)
            } else {
                eprintln!("iteration limit {} reached without convergence", a.max_iters);
                Ok(exit::ITERATION_LIMIT)
            }
        }
        Err(SolveError::Fault { fault, trace }) => {
            emit(a.out.as_deref(), &trace_csv(a.method, &trace))?;
            eprintln!("solver fault: {fault}");
            Ok(exit::SOLVER_FAULT)
        }
        Err(e) => Err(CliError::Usage(e.to_string())),
    }
}

pub const COMPARE_METHODS: [Method; 3] = [Method::Bp, Method::Jacobi, Method::Consensus];

/// One column of the comparison table: the error per completed round and,
/// if the method stopped early, why.
struct Column {
    errors: Vec<Option<f64>>,
    failure: Option<&'static str>,
}

fn column(method: Method, sys: &SparseSystem, cfg: &SolveConfig) -> Column {
    let errors = |t: &ConvergenceTrace| t.rounds.iter().map(|r| r.log10_mse).collect();
    match run_method(method, sys, cfg) {
        Ok(sol) => Column {
            errors: errors(&sol.trace),
            failure: None,
        },
        Err(SolveError::Fault { fault, trace }) => {
            eprintln!("{}: {fault}", method.name());
            Column {
                errors: errors(&trace),
                failure: Some("fault"),
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", method.name());
            Column {
                errors: Vec::new(),
                failure: Some("rejected"),
            }
        }
    }
}

fn compare(a: &CompareArgs) -> Result<u8, CliError> {
    let sys = mtx::read_system(&a.matrix, a.rhs.as_deref())?;
    let exact = dense_solve(&sys)
        .map_err(|e| CliError::Usage(format!("compare needs a dense reference: {e}")))?;
    let cfg = SolveConfig::fixed(a.max_iters as usize)
        .forced(a.force)
        .with_reference(Some(exact));
    let columns: Vec<Column> = COMPARE_METHODS.iter().map(|&m| column(m, &sys, &cfg)).collect();

    let names: Vec<&str> = COMPARE_METHODS.iter().map(|m| m.name()).collect();
    let mut s = format!("iter,{}\n", names.join(","));
    for k in 0..=a.max_iters as usize {
        s.push_str(&k.to_string());
        for c in &columns {
            s.push(',');
            match c.errors.get(k) {
                Some(v) => s.push_str(&v.map(fmt_real).unwrap_or_default()),
                None if k == c.errors.len() => s.push_str(c.failure.unwrap_or_default()),
                None => {}
            }
        }
        s.push('\n');
    }
    emit(a.out.as_deref(), &s)?;
    Ok(exit::OK)
}
