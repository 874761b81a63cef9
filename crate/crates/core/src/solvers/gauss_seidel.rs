//! Sequential Gauss–Seidel reference.
//!
//! Row `i` of a sweep reads the values already updated for rows `< i` in
//! the same sweep, so the update order is a global sequence and there is no
//! node program for it. It never runs on the round engine.

use crate::engine::{
    delta_stop, log10_mse, ConvergenceTrace, FaultCause, RoundAccounting, RoundRecord,
    SolverFault, StopRule,
};
use crate::system::SparseSystem;

use super::{check_reference, Solution, SolveConfig, SolveError, DIVERGENCE_LIMIT};

/// One sweep in index order starting from `x`.
pub fn gauss_seidel_sweep(sys: &SparseSystem, x: &[f64]) -> Result<Vec<f64>, FaultCause> {
    sweep(sys, x).map_err(|(_, cause)| cause)
}

fn sweep(sys: &SparseSystem, x: &[f64]) -> Result<Vec<f64>, (usize, FaultCause)> {
    assert_eq!(x.len(), sys.n(), "estimate length must equal n");
    let mut x = x.to_vec();
    for i in 0..sys.n() {
        let s: f64 = sys.off_diagonal(i).map(|(j, a)| a * x[j]).sum();
        let xi = (sys.rhs()[i] - s) / sys.diag()[i];
        if !xi.is_finite() || xi.abs() > DIVERGENCE_LIMIT {
            return Err((i, FaultCause::DivergedEstimate(xi)));
        }
        x[i] = xi;
    }
    Ok(x)
}

/// Repeated sweeps from `x(0) = D⁻¹b`. Trace records carry zero messages;
/// operation counts are per row.
pub fn gauss_seidel_solve(sys: &SparseSystem, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    check_reference(sys.n(), cfg)?;
    let n = sys.n();
    let ops: Vec<usize> = (0..n).map(|i| 2 * sys.off_diagonal(i).count() + 1).collect();
    let storage: Vec<usize> = (0..n).map(|i| sys.off_diagonal(i).count() + 3).collect();
    let record = |k: usize, x: Vec<f64>, prev: Option<&[f64]>, ops: Vec<usize>| RoundRecord {
        k,
        log10_mse: cfg.reference.as_deref().map(|r| log10_mse(&x, r)),
        max_delta: prev.map(|p| p.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((b - a).abs()))),
        estimates: x,
        accounting: RoundAccounting {
            messages_sent: 0,
            per_node_ops: ops,
            per_node_storage: storage.clone(),
        },
    };

    let x0: Vec<f64> = sys.rhs().iter().zip(sys.diag()).map(|(b, a)| b / a).collect();
    let mut trace = ConvergenceTrace {
        rounds: vec![record(0, x0, None, vec![1; n])],
    };
    let mut converged = false;
    for k in 1..=cfg.max_rounds {
        let prev = trace.rounds.last().expect("round 0 recorded").estimates.clone();
        let x = sweep(sys, &prev).map_err(|(node, cause)| SolveError::Fault {
            fault: SolverFault {
                node,
                round: k,
                cause,
            },
            trace: Box::new(trace.clone()),
        })?;
        let done = match cfg.stop {
            StopRule::FixedRounds => false,
            StopRule::EstimateDelta(tol) => delta_stop(&prev, &x, tol),
            StopRule::ErrorBelow(tol) => cfg
                .reference
                .as_deref()
                .is_some_and(|r| log10_mse(&x, r) <= tol.log10()),
        };
        trace.rounds.push(record(k, x, Some(&prev), ops.clone()));
        if done {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        x: trace.rounds.last().expect("nonempty").estimates.clone(),
        trace,
        converged,
        nonpositive_messages: 0,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> SparseSystem {
        SparseSystem::new(
            2,
            [(0, 0, 1.0), (0, 1, -0.5), (1, 0, -0.25), (1, 1, 1.0)],
            vec![1.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn sweep_by_hand() {
        assert_eq!(gauss_seidel_sweep(&two_node(), &[1.0, 2.0]).unwrap(), vec![2.0, 2.5]);
    }

    #[test]
    fn diagonal_exact_after_one_sweep() {
        let sys = SparseSystem::new(2, [(0, 0, 2.0), (1, 1, 5.0)], vec![1.0, 1.0]).unwrap();
        assert_eq!(gauss_seidel_sweep(&sys, &[9.0, -9.0]).unwrap(), vec![0.5, 0.2]);
    }

    #[test]
    fn solution_is_a_fixed_point() {
        let x = [16.0 / 7.0, 18.0 / 7.0];
        let y = gauss_seidel_sweep(&two_node(), &x).unwrap();
        assert!((y[0] - x[0]).abs() < 1e-15 && (y[1] - x[1]).abs() < 1e-15);
    }

    #[test]
    fn solve_converges_with_zero_messages() {
        let sol = gauss_seidel_solve(&two_node(), &SolveConfig::new(100, 1e-14)).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 16.0 / 7.0).abs() < 1e-13);
        assert!(sol.trace.rounds.iter().all(|r| r.accounting.messages_sent == 0));
    }
}
