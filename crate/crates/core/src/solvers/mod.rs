//! Iterative solvers run on the round engine, plus the sequential
//! Gauss–Seidel reference and the dense direct solver.

pub mod bp;
pub mod consensus;
pub mod gauss_seidel;
pub mod jacobi;

use thiserror::Error;

use crate::analysis::WalkSummability;
use crate::engine::{ConvergenceTrace, EngineConfig, SolverFault, StopRule};

pub use crate::dense::dense_solve;
pub use bp::{bp_solve, BpMessage, BpProgram};
pub use consensus::{consensus_solve, ConsensusProgram};
pub use gauss_seidel::{gauss_seidel_solve, gauss_seidel_sweep};
pub use jacobi::{jacobi_solve, JacobiProgram};

/// Estimates beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e150;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub max_rounds: usize,
    pub stop: StopRule,
    /// Run message passing even when the system is not certified
    /// walk-summable.
    pub force: bool,
    pub parallel: bool,
    /// Reference solution for the error column of the trace.
    pub reference: Option<Vec<f64>>,
}

impl SolveConfig {
    /// Stops on [`crate::engine::delta_stop`] with `tol`.
    pub fn new(max_rounds: usize, tol: f64) -> Self {
        Self {
            max_rounds,
            stop: StopRule::EstimateDelta(tol),
            force: false,
            parallel: false,
            reference: None,
        }
    }

    /// Runs exactly `rounds` rounds regardless of convergence.
    pub fn fixed(rounds: usize) -> Self {
        Self {
            stop: StopRule::FixedRounds,
            ..Self::new(rounds, 0.0)
        }
    }

    pub fn with_reference(mut self, reference: Option<Vec<f64>>) -> Self {
        self.reference = reference;
        self
    }

    pub fn forced(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub(crate) fn engine(&self, max_rounds: usize, stop: StopRule) -> EngineConfig {
        EngineConfig {
            max_rounds,
            stop,
            parallel: self.parallel,
            reference: self.reference.clone(),
        }
    }
}

/// Attached to a forced run on a system without a walk-summability
/// certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct NotWalkSummable {
    pub verdict: WalkSummability,
    pub rho_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub trace: ConvergenceTrace,
    /// The stop rule fired (or the tree schedule completed) before the
    /// round limit.
    pub converged: bool,
    /// Count of message a-values `<= 0` over all rounds (message passing
    /// solver only).
    pub nonpositive_messages: usize,
    pub warning: Option<NotWalkSummable>,
}

impl Solution {
    pub fn rounds(&self) -> usize {
        self.trace.final_round()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("system is not certified walk-summable (verdict {}, rho(|R|) = {rho_abs}); use force to run anyway", verdict.as_str())]
    NotWalkSummable {
        verdict: WalkSummability,
        rho_abs: f64,
    },
    #[error("{fault}")]
    Fault {
        fault: SolverFault,
        /// Rounds completed before the fault.
        trace: Box<ConvergenceTrace>,
    },
    #[error("reference has length {found}, expected {expected}")]
    ReferenceLength { expected: usize, found: usize },
}

pub(crate) fn check_reference(n: usize, cfg: &SolveConfig) -> Result<(), SolveError> {
    match &cfg.reference {
        Some(r) if r.len() != n => Err(SolveError::ReferenceLength {
            expected: n,
            found: r.len(),
        }),
        _ => Ok(()),
    }
}
