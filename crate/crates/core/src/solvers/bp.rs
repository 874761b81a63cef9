//! Message-passing solver for asymmetric walk-summable systems.
//!
//! Node `i` keeps, for every neighbour `v`, the pair `(a_{v→i}, b_{v→i})`
//! received in the previous round and computes
//!
//! ```text
//! ã_i = a_ii − Σ_v a_vi a_iv / a_{v→i}      b̃_i = b_i − Σ_v a_iv b_{v→i} / a_{v→i}
//! x̂_i = b̃_i / ã_i
//! a_{i→j} = ã_i + a_ji a_ij / a_{j→i}       b_{i→j} = b̃_i + a_ij b_{j→i} / a_{j→i}
//! ```
//!
//! The outgoing pair removes the recipient's own contribution from the full
//! neighbour sum, so a round costs `O(|N_i|)` at each node. On a tree the
//! messages are Schur complements of the subtree behind the sender and the
//! estimate is exact after `diameter(G)` rounds.

use crate::analysis::{analyze, WalkSummability};
use crate::engine::{
    run_rounds_observed, FaultCause, Inbox, NodeProgram, OpCounter, StopReason, StopRule,
    Topology,
};
use crate::graph::UndirectedGraph;
use crate::system::{NodeId, SparseSystem};

use super::{check_reference, NotWalkSummable, Solution, SolveConfig, SolveError, DIVERGENCE_LIMIT};

/// Relative threshold below which an incoming a-value counts as zero.
pub const SINGULAR_MESSAGE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpMessage {
    pub a: f64,
    pub b: f64,
}

/// A message labelled with its endpoints and round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdgeMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub a_val: f64,
    pub b_val: f64,
    pub round: usize,
}

/// Attaches endpoints to an engine message buffer.
pub fn label_messages(topo: &Topology, messages: &[BpMessage], round: usize) -> Vec<DirectedEdgeMessage> {
    messages
        .iter()
        .enumerate()
        .map(|(e, m)| DirectedEdgeMessage {
            from: topo.source(e),
            to: topo.target(e),
            a_val: m.a,
            b_val: m.b,
            round,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpNodeState {
    pub a_out: Vec<f64>,
    pub b_out: Vec<f64>,
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub x_hat: f64,
}

pub struct BpProgram<'a> {
    sys: &'a SparseSystem,
    topo: &'a Topology,
    /// `(a_iv, a_vi)` for directed edge `i -> v`.
    coupling: Vec<(f64, f64)>,
    eps_sing: f64,
    flip_add_back: bool,
}

impl<'a> BpProgram<'a> {
    pub fn new(sys: &'a SparseSystem, topo: &'a Topology) -> Self {
        assert_eq!(sys.n(), topo.node_count(), "topology must match the system");
        let coupling = (0..topo.directed_edge_count())
            .map(|e| {
                let (i, v) = (topo.source(e), topo.target(e));
                (sys.a(i, v), sys.a(v, i))
            })
            .collect();
        Self {
            sys,
            topo,
            coupling,
            eps_sing: SINGULAR_MESSAGE_TOLERANCE * sys.matrix().max_abs(),
            flip_add_back: false,
        }
    }

    /// Subtracts instead of adding back the recipient's term in the outgoing
    /// a-message. Exists only so verification can be shown to catch it.
    #[doc(hidden)]
    pub fn with_flipped_add_back(mut self) -> Self {
        self.flip_add_back = true;
        self
    }
}

impl NodeProgram for BpProgram<'_> {
    type State = BpNodeState;
    type Message = BpMessage;

    fn init(&self, node: NodeId, ops: &mut OpCounter) -> (BpNodeState, Vec<BpMessage>) {
        let (a, b) = (self.sys.diag()[node], self.sys.rhs()[node]);
        let deg = self.topo.degree(node);
        ops.add(1);
        let state = BpNodeState {
            a_out: vec![a; deg],
            b_out: vec![b; deg],
            a_tilde: a,
            b_tilde: b,
            x_hat: b / a,
        };
        (state, vec![BpMessage { a, b }; deg])
    }

    fn step(
        &self,
        node: NodeId,
        _state: &BpNodeState,
        inbox: Inbox<'_, BpMessage>,
        ops: &mut OpCounter,
    ) -> Result<(BpNodeState, Vec<BpMessage>), FaultCause> {
        let deg = inbox.len();
        let mut ta = Vec::with_capacity(deg);
        let mut tb = Vec::with_capacity(deg);
        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        for (slot, (from, m)) in inbox.iter().enumerate() {
            if m.a.abs() <= self.eps_sing || !m.a.is_finite() {
                return Err(FaultCause::SingularMessage { from, value: m.a });
            }
            let (a_iv, a_vi) = self.coupling[self.topo.edge_id(node, slot)];
            let t_a = a_vi * a_iv / m.a;
            let t_b = a_iv * m.b / m.a;
            sum_a += t_a;
            sum_b += t_b;
            ta.push(t_a);
            tb.push(t_b);
        }
        ops.add(6 * deg);

        let a_tilde = self.sys.diag()[node] - sum_a;
        let b_tilde = self.sys.rhs()[node] - sum_b;
        if a_tilde.abs() <= self.eps_sing {
            return Err(FaultCause::SingularPivot(a_tilde));
        }
        let x_hat = b_tilde / a_tilde;
        ops.add(3);
        if !x_hat.is_finite() || x_hat.abs() > DIVERGENCE_LIMIT {
            return Err(FaultCause::DivergedEstimate(x_hat));
        }

        let sign = if self.flip_add_back { -1.0 } else { 1.0 };
        let a_out: Vec<f64> = ta.iter().map(|t| a_tilde + sign * t).collect();
        let b_out: Vec<f64> = tb.iter().map(|t| b_tilde + t).collect();
        ops.add(2 * deg);
        let out = a_out
            .iter()
            .zip(&b_out)
            .map(|(&a, &b)| BpMessage { a, b })
            .collect();
        Ok((
            BpNodeState {
                a_out,
                b_out,
                a_tilde,
                b_tilde,
                x_hat,
            },
            out,
        ))
    }

    fn estimate(&self, _node: NodeId, state: &BpNodeState) -> f64 {
        state.x_hat
    }

    fn storage(&self, node: NodeId, _state: &BpNodeState) -> usize {
        // Outgoing pairs, couplings, three scalars and (a_ii, b_i).
        4 * self.topo.degree(node) + 5
    }

    fn message_words(&self, _m: &BpMessage) -> usize {
        2
    }
}

/// Solves `A x = b` by message passing.
///
/// Refuses systems without a walk-summability certificate unless
/// `cfg.force` is set, in which case the result carries a warning. On an
/// acyclic graph with a delta stop rule the solver runs exactly
/// `diameter(G)` rounds; otherwise it follows `cfg.stop`.
pub fn bp_solve(sys: &SparseSystem, cfg: &SolveConfig) -> Result<Solution, SolveError> {
    check_reference(sys.n(), cfg)?;
    let report = analyze(sys);
    let warning = match report.walk_summable {
        WalkSummability::Yes => None,
        verdict if cfg.force => Some(NotWalkSummable {
            verdict,
            rho_abs: report.rho_abs,
        }),
        verdict => {
            return Err(SolveError::NotWalkSummable {
                verdict,
                rho_abs: report.rho_abs,
            })
        }
    };

    let graph = UndirectedGraph::induced(sys);
    let topo = Topology::new(&graph);
    let program = BpProgram::new(sys, &topo);

    let tree_rounds = match cfg.stop {
        StopRule::EstimateDelta(_) if graph.is_acyclic() => Some(graph.diameter()),
        _ => None,
    };
    let engine_cfg = match tree_rounds {
        Some(d) => cfg.engine(d.min(cfg.max_rounds), StopRule::FixedRounds),
        None => cfg.engine(cfg.max_rounds, cfg.stop),
    };

    let mut nonpositive = 0;
    let out = run_rounds_observed(&topo, &program, &engine_cfg, |_, _, msgs| {
        nonpositive += msgs.iter().filter(|m| m.a <= 0.0).count();
    });
    if let Some(fault) = out.fault {
        return Err(SolveError::Fault {
            fault,
            trace: Box::new(out.trace),
        });
    }
    let converged = match tree_rounds {
        Some(d) => d <= cfg.max_rounds,
        None => out.stop == StopReason::Converged,
    };
    Ok(Solution {
        x: out.estimates().to_vec(),
        trace: out.trace,
        converged,
        nonpositive_messages: nonpositive,
        warning,
    })
}
