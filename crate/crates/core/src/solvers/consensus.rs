//! Projection-consensus baseline.
//!
//! Every node holds a full `n`-vector `x_i` satisfying its own row,
//! `a_iᵀ x_i = b_i`, and moves it towards the average of its neighbours'
//! vectors inside that hyperplane:
//!
//! ```text
//! x_i ← x_i − (1/|N_i|) P_i (|N_i| x_i − Σ_{j∈N_i} x_j),   P_i = I − a_i a_iᵀ / ‖a_i‖²
//! ```
//!
//! Messages are whole vectors, so work and storage grow with `n`; the
//! accounting records the resulting work and storage violations.

use std::sync::Arc;

use crate::engine::{run_rounds, FaultCause, Inbox, NodeProgram, OpCounter, StopReason, Topology};
use crate::graph::UndirectedGraph;
use crate::system::{NodeId, SparseSystem};

use super::{check_reference, Solution, SolveConfig, SolveError, DIVERGENCE_LIMIT};

pub struct ConsensusProgram<'a> {
    sys: &'a SparseSystem,
    topo: &'a Topology,
    /// Squared norm of each row.
    row_norm2: Vec<f64>,
}

impl<'a> ConsensusProgram<'a> {
    pub fn new(sys: &'a SparseSystem, topo: &'a Topology) -> Self {
        assert_eq!(sys.n(), topo.node_count(), "topology must match the system");
        let row_norm2 = (0..sys.n())
            .map(|i| sys.matrix().row(i).map(|(_, v)| v * v).sum())
            .collect();
        Self {
            sys,
            topo,
            row_norm2,
        }
    }

    /// `a_iᵀ x`.
    pub fn row_dot(&self, i: NodeId, x: &[f64]) -> f64 {
        self.sys.matrix().row(i).map(|(j, v)| v * x[j]).sum()
    }
}

impl NodeProgram for ConsensusProgram<'_> {
    type State = Arc<Vec<f64>>;
    type Message = Arc<Vec<f64>>;

    fn init(&self, node: NodeId, ops: &mut OpCounter) -> (Self::State, Vec<Self::Message>) {
        let mut x = vec![0.0; self.sys.n()];
        x[node] = self.sys.rhs()[node] / self.sys.diag()[node];
        ops.add(1);
        let x = Arc::new(x);
        (x.clone(), vec![x; self.topo.degree(node)])
    }

    fn step(
        &self,
        node: NodeId,
        state: &Self::State,
        inbox: Inbox<'_, Self::Message>,
        ops: &mut OpCounter,
    ) -> Result<(Self::State, Vec<Self::Message>), FaultCause> {
        let deg = inbox.len();
        if deg == 0 {
            return Ok((state.clone(), Vec::new()));
        }
        let norm2 = self.row_norm2[node];
        if norm2 == 0.0 {
            return Err(FaultCause::ZeroRow);
        }
        let n = state.len();
        let row_nnz = self.sys.matrix().row(node).count();

        // v = |N_i| x_i − Σ x_j
        let mut v: Vec<f64> = state.iter().map(|x| deg as f64 * x).collect();
        for (_, xj) in inbox.iter() {
            for (vk, xk) in v.iter_mut().zip(xj.iter()) {
                *vk -= xk;
            }
        }
        // P_i v = v − a_i (a_iᵀ v / ‖a_i‖²)
        let c = self.row_dot(node, &v) / norm2;
        for (j, a) in self.sys.matrix().row(node) {
            v[j] -= a * c;
        }
        let inv = 1.0 / deg as f64;
        let x: Vec<f64> = state.iter().zip(&v).map(|(x, p)| x - inv * p).collect();
        ops.add(n * (deg + 3) + 4 * row_nnz + 2);
        if let Some(bad) = x.iter().find(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
            return Err(FaultCause::DivergedEstimate(*bad));
        }
        let x = Arc::new(x);
        Ok((x.clone(), vec![x; deg]))
    }

    fn estimate(&self, node: NodeId, state: &Self::State) -> f64 {
        state[node]
    }

    fn storage(&self, node: NodeId, state: &Self::State) -> usize {
        // Own vector, the row (column index and value) and its norm.
        state.len() + 2 * self.sys.matrix().row(node).count() + 1
    }

    fn message_words(&self, m: &Self::Message) -> usize {
        m.len()
    }
}

pub fn consensus_solve(sys: &SparseSystem, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    check_reference(sys.n(), cfg)?;
    let topo = Topology::new(&UndirectedGraph::induced(sys));
    let program = ConsensusProgram::new(sys, &topo);
    let out = run_rounds(&topo, &program, &cfg.engine(cfg.max_rounds, cfg.stop));
    if let Some(fault) = out.fault {
        return Err(SolveError::Fault {
            fault,
            trace: Box::new(out.trace),
        });
    }
    Ok(Solution {
        x: out.estimates().to_vec(),
        converged: out.stop == StopReason::Converged,
        trace: out.trace,
        nonpositive_messages: 0,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_rounds_observed, EngineConfig};

    fn two_node() -> SparseSystem {
        SparseSystem::new(
            2,
            [(0, 0, 1.0), (0, 1, -0.5), (1, 0, -0.25), (1, 1, 1.0)],
            vec![1.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn one_step_by_hand() {
        let sys = two_node();
        let topo = Topology::new(&UndirectedGraph::induced(&sys));
        let prog = ConsensusProgram::new(&sys, &topo);
        let out = run_rounds(&topo, &prog, &EngineConfig::fixed(1));
        let x1 = &out.states[0];
        assert!((x1[0] - 1.6).abs() < 1e-15 && (x1[1] - 1.2).abs() < 1e-15);
        assert!((prog.row_dot(0, x1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_consensus_is_a_fixed_point() {
        let sys = two_node();
        let topo = Topology::new(&UndirectedGraph::induced(&sys));
        let prog = ConsensusProgram::new(&sys, &topo);
        let xs = Arc::new(vec![16.0 / 7.0, 18.0 / 7.0]);
        let msgs = vec![xs.clone(), xs.clone()];
        let inbox = Inbox::new(&topo, 0, &msgs);
        let (next, _) = prog.step(0, &xs, inbox, &mut OpCounter::default()).unwrap();
        assert!(next.iter().zip(xs.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn rows_stay_consistent() {
        let sys = two_node();
        let topo = Topology::new(&UndirectedGraph::induced(&sys));
        let prog = ConsensusProgram::new(&sys, &topo);
        let mut worst = 0.0f64;
        let out = run_rounds_observed(&topo, &prog, &EngineConfig::fixed(50), |_, states, _| {
            for (i, x) in states.iter().enumerate() {
                worst = worst.max((prog.row_dot(i, x) - sys.rhs()[i]).abs());
            }
        });
        assert!(worst < 1e-12);
        assert!(out.stop != StopReason::Fault);
    }
}
