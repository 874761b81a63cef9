//! Jacobi iteration as a node program: every node broadcasts its scalar
//! estimate and updates `x̂_i ← (b_i − Σ_j a_ij x̂_j) / a_ii`.
//!
//! From `x̂(0) = D⁻¹b` the iterate after `k` rounds is
//! `Σ_{ℓ=0}^{k} R^ℓ D⁻¹b`, the walk sum over walks of length at most `k`.

use crate::engine::{run_rounds, FaultCause, Inbox, NodeProgram, OpCounter, StopReason, Topology};
use crate::graph::UndirectedGraph;
use crate::system::{NodeId, SparseSystem};

use super::{check_reference, Solution, SolveConfig, SolveError, DIVERGENCE_LIMIT};

pub struct JacobiProgram<'a> {
    sys: &'a SparseSystem,
    topo: &'a Topology,
    /// `a_iv` for directed edge `i -> v`.
    coupling: Vec<f64>,
}

impl<'a> JacobiProgram<'a> {
    pub fn new(sys: &'a SparseSystem, topo: &'a Topology) -> Self {
        assert_eq!(sys.n(), topo.node_count(), "topology must match the system");
        let coupling = (0..topo.directed_edge_count())
            .map(|e| sys.a(topo.source(e), topo.target(e)))
            .collect();
        Self { sys, topo, coupling }
    }
}

impl NodeProgram for JacobiProgram<'_> {
    type State = f64;
    type Message = f64;

    fn init(&self, node: NodeId, ops: &mut OpCounter) -> (f64, Vec<f64>) {
        ops.add(1);
        let x = self.sys.rhs()[node] / self.sys.diag()[node];
        (x, vec![x; self.topo.degree(node)])
    }

    fn step(
        &self,
        node: NodeId,
        _state: &f64,
        inbox: Inbox<'_, f64>,
        ops: &mut OpCounter,
    ) -> Result<(f64, Vec<f64>), FaultCause> {
        let mut s = self.sys.rhs()[node];
        for (slot, (_, &x)) in inbox.iter().enumerate() {
            s -= self.coupling[self.topo.edge_id(node, slot)] * x;
        }
        let x = s / self.sys.diag()[node];
        ops.add(2 * inbox.len() + 1);
        if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
            return Err(FaultCause::DivergedEstimate(x));
        }
        Ok((x, vec![x; inbox.len()]))
    }

    fn estimate(&self, _node: NodeId, state: &f64) -> f64 {
        *state
    }

    fn storage(&self, node: NodeId, _state: &f64) -> usize {
        // Estimate, couplings and (a_ii, b_i).
        self.topo.degree(node) + 3
    }

    fn message_words(&self, _m: &f64) -> usize {
        1
    }
}

pub fn jacobi_solve(sys: &SparseSystem, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    check_reference(sys.n(), cfg)?;
    let topo = Topology::new(&UndirectedGraph::induced(sys));
    let program = JacobiProgram::new(sys, &topo);
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
