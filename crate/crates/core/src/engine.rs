//! Synchronous round simulator for node programs.
//!
//! A round has two phases. Every node reads the frozen snapshot of messages
//! delivered at the end of the previous round and writes exactly one message
//! per neighbour; the new messages are delivered together at the barrier.
//! A transition can never see a message written in its own round, so node
//! evaluation order (and parallel evaluation) cannot change the trace.
//!
//! The engine also keeps the books for the three locality constraints:
//! one message per directed edge per round, `O(|N_i|)` arithmetic per round
//! and `O(|N_i|)` words of storage. Programs count their own
//! arithmetic through [`OpCounter`]; the engine checks the counts against
//! [`WORK_CONSTANT`] and [`STORAGE_CONSTANT`].

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::UndirectedGraph;
use crate::system::NodeId;

/// `C` in `ops_i <= C * max(1, |N_i|)`.
pub const WORK_CONSTANT: usize = 16;
/// `C'` in `storage_i <= C' * max(1, |N_i|)`.
pub const STORAGE_CONSTANT: usize = 16;

/// Directed-edge indexing of an undirected graph.
///
/// Edge `i -> neighbors(i)[s]` has id `offset(i) + s`, so a node's outgoing
/// edges are contiguous and follow its sorted neighbour list.
#[derive(Debug, Clone)]
pub struct Topology {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    sources: Vec<NodeId>,
    reverse: Vec<usize>,
}

impl Topology {
    pub fn new(g: &UndirectedGraph) -> Self {
        let n = g.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut sources = Vec::new();
        for i in 0..n {
            targets.extend_from_slice(g.neighbors(i));
            sources.extend(std::iter::repeat_n(i, g.degree(i)));
            offsets.push(targets.len());
        }
        let reverse = (0..targets.len())
            .map(|e| {
                let (i, j) = (sources[e], targets[e]);
                let slot = g.neighbors(j).binary_search(&i).expect("graph is symmetric");
                offsets[j] + slot
            })
            .collect();
        Self {
            offsets,
            targets,
            sources,
            reverse,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of directed edges, `2|E|`.
    pub fn directed_edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Id of directed edge `i -> neighbors(i)[slot]`.
    pub fn edge_id(&self, i: NodeId, slot: usize) -> usize {
        debug_assert!(slot < self.degree(i));
        self.offsets[i] + slot
    }

    /// Id of directed edge `i -> j`, if it exists.
    pub fn find_edge(&self, i: NodeId, j: NodeId) -> Option<usize> {
        self.neighbors(i)
            .binary_search(&j)
            .ok()
            .map(|s| self.offsets[i] + s)
    }

    pub fn source(&self, e: usize) -> NodeId {
        self.sources[e]
    }

    pub fn target(&self, e: usize) -> NodeId {
        self.targets[e]
    }

    /// Id of the opposite directed edge.
    pub fn reverse(&self, e: usize) -> usize {
        self.reverse[e]
    }
}

/// Arithmetic operation counter handed to node transitions.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter(usize);

impl OpCounter {
    pub fn add(&mut self, ops: usize) {
        self.0 += ops;
    }

    pub fn count(&self) -> usize {
        self.0
    }
}

/// The previous round's messages addressed to one node, by neighbour slot.
pub struct Inbox<'a, M> {
    topo: &'a Topology,
    node: NodeId,
    messages: &'a [M],
}

impl<'a, M> Inbox<'a, M> {
    /// View of `messages` (indexed by directed edge id) as seen by `node`.
    pub fn new(topo: &'a Topology, node: NodeId, messages: &'a [M]) -> Self {
        assert_eq!(messages.len(), topo.directed_edge_count(), "one message per directed edge");
        Self {
            topo,
            node,
            messages,
        }
    }

    pub fn len(&self) -> usize {
        self.topo.degree(self.node)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Message from `neighbors(node)[slot]`.
    pub fn get(&self, slot: usize) -> &'a M {
        &self.messages[self.topo.reverse(self.topo.edge_id(self.node, slot))]
    }

    /// `(sender, message)` pairs in neighbour order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &'a M)> + '_ {
        self.topo
            .neighbors(self.node)
            .iter()
            .enumerate()
            .map(move |(s, &v)| (v, self.get(s)))
    }
}

/// Why a node transition refused to continue.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultCause {
    #[error("message a-value {value:e} from node {from} is numerically zero")]
    SingularMessage { from: NodeId, value: f64 },
    #[error("local pivot {0:e} is numerically zero")]
    SingularPivot(f64),
    #[error("estimate {0:e} diverged")]
    DivergedEstimate(f64),
    #[error("row has zero norm")]
    ZeroRow,
    #[error("node wrote {found} messages for {expected} neighbours")]
    OutboxSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("node {node} failed in round {round}: {cause}")]
pub struct SolverFault {
    pub node: NodeId,
    pub round: usize,
    pub cause: FaultCause,
}

/// A per-node transition function run by the engine.
pub trait NodeProgram: Sync {
    type State: Clone + Send + Sync;
    type Message: Clone + Send + Sync;

    /// Round-0 state and one message per neighbour, in neighbour order.
    fn init(&self, node: NodeId, ops: &mut OpCounter) -> (Self::State, Vec<Self::Message>);

    /// Round-k transition from the round-(k-1) state and inbox.
    fn step(
        &self,
        node: NodeId,
        state: &Self::State,
        inbox: Inbox<'_, Self::Message>,
        ops: &mut OpCounter,
    ) -> Result<(Self::State, Vec<Self::Message>), FaultCause>;

    /// The node's current estimate of its own variable.
    fn estimate(&self, node: NodeId, state: &Self::State) -> f64;

    /// Words held by the node between rounds, excluding its inbox.
    fn storage(&self, node: NodeId, state: &Self::State) -> usize;

    fn message_words(&self, message: &Self::Message) -> usize;
}

/// Communication, work and storage counters for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundAccounting {
    pub messages_sent: usize,
    pub per_node_ops: Vec<usize>,
    pub per_node_storage: Vec<usize>,
}

/// Nodes whose counters exceeded the locality bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalityViolations {
    pub ops: Vec<NodeId>,
    pub storage: Vec<NodeId>,
}

impl LocalityViolations {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty() && self.storage.is_empty()
    }
}

impl RoundAccounting {
    pub fn violations(&self, topo: &Topology) -> LocalityViolations {
        let bound = |i: NodeId, c: usize| c * topo.degree(i).max(1);
        LocalityViolations {
            ops: (0..topo.node_count())
                .filter(|&i| self.per_node_ops[i] > bound(i, WORK_CONSTANT))
                .collect(),
            storage: (0..topo.node_count())
                .filter(|&i| self.per_node_storage[i] > bound(i, STORAGE_CONSTANT))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub k: usize,
    pub estimates: Vec<f64>,
    /// `log10(‖x̂ - x*‖² / n)` when a reference is available.
    pub log10_mse: Option<f64>,
    /// `max_i |x̂_i(k) - x̂_i(k-1)|`; absent for round 0.
    pub max_delta: Option<f64>,
    pub accounting: RoundAccounting,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub rounds: Vec<RoundRecord>,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    /// Index of the final recorded round.
    pub fn final_round(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.k)
    }

    pub fn log10_mse(&self) -> Vec<Option<f64>> {
        self.rounds.iter().map(|r| r.log10_mse).collect()
    }

    /// Locality violations over every recorded round.
    pub fn violations(&self, topo: &Topology) -> LocalityViolations {
        let mut out = LocalityViolations::default();
        for r in &self.rounds {
            let v = r.accounting.violations(topo);
            out.ops.extend(v.ops);
            out.storage.extend(v.storage);
        }
        out.ops.sort_unstable();
        out.ops.dedup();
        out.storage.sort_unstable();
        out.storage.dedup();
        out
    }
}

/// `log10(‖x - reference‖² / n)`; `-inf` when they agree exactly.
pub fn log10_mse(x: &[f64], reference: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    let sq: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq / n).log10()
}

/// True iff `max_i |cur_i - prev_i| <= tol * max(1, max_i |cur_i|)`.
pub fn delta_stop(prev: &[f64], cur: &[f64], tol: f64) -> bool {
    assert_eq!(prev.len(), cur.len(), "estimate vectors must have equal length");
    let scale = cur.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    max_delta(prev, cur) <= tol * scale
}

fn max_delta(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter()
        .zip(cur)
        .fold(0.0f64, |m, (a, b)| m.max((b - a).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run exactly `max_rounds` rounds.
    FixedRounds,
    /// Stop after the first round where [`delta_stop`] holds.
    EstimateDelta(f64),
    /// Stop once the mean squared error against the reference is `<= tol`.
    ErrorBelow(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub max_rounds: usize,
    pub stop: StopRule,
    pub parallel: bool,
    pub reference: Option<Vec<f64>>,
}

impl EngineConfig {
    pub fn fixed(rounds: usize) -> Self {
        Self {
            max_rounds: rounds,
            stop: StopRule::FixedRounds,
            parallel: false,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Option<Vec<f64>>) -> Self {
        self.reference = reference;
        self
    }

    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The stop rule fired.
    Converged,
    /// `max_rounds` was reached (always the case for `FixedRounds`).
    RoundLimit,
    Fault,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<P: NodeProgram> {
    pub trace: ConvergenceTrace,
    /// Node states after the last completed round.
    pub states: Vec<P::State>,
    /// Messages written in the last completed round, by directed edge id.
    pub messages: Vec<P::Message>,
    pub stop: StopReason,
    pub fault: Option<SolverFault>,
}

impl<P: NodeProgram> RunOutcome<P> {
    pub fn estimates(&self) -> &[f64] {
        self.trace.last().map_or(&[], |r| r.estimates.as_slice())
    }
}

/// Runs `program` until its stop rule fires, `max_rounds` is reached, or a
/// node faults.
pub fn run_rounds<P: NodeProgram>(
    topo: &Topology,
    program: &P,
    cfg: &EngineConfig,
) -> RunOutcome<P> {
    run_rounds_observed(topo, program, cfg, |_, _, _| {})
}

/// Like [`run_rounds`], calling `observer(k, states, messages)` after round 0
/// and after every completed round.
pub fn run_rounds_observed<P, F>(
    topo: &Topology,
    program: &P,
    cfg: &EngineConfig,
    mut observer: F,
) -> RunOutcome<P>
where
    P: NodeProgram,
    F: FnMut(usize, &[P::State], &[P::Message]),
{
    let n = topo.node_count();
    let reference = cfg.reference.as_deref();
    if let Some(r) = reference {
        assert_eq!(r.len(), n, "reference length must equal node count");
    }

    let init: Vec<_> = map_nodes(n, cfg.parallel, |i| {
        let mut ops = OpCounter::default();
        let (state, out) = program.init(i, &mut ops);
        (state, out, ops.count())
    });
    let mut states = Vec::with_capacity(n);
    let mut messages = Vec::with_capacity(topo.directed_edge_count());
    let mut ops = Vec::with_capacity(n);
    for (i, (state, out, count)) in init.into_iter().enumerate() {
        assert_eq!(out.len(), topo.degree(i), "init must address every neighbour once");
        states.push(state);
        messages.extend(out);
        ops.push(count);
    }

    let mut trace = ConvergenceTrace::default();
    trace
        .rounds
        .push(record(0, topo, program, &states, &messages, ops, None, reference));
    observer(0, &states, &messages);

    for k in 1..=cfg.max_rounds {
        let results: Vec<_> = map_nodes(n, cfg.parallel, |i| {
            let inbox = Inbox {
                topo,
                node: i,
                messages: &messages,
            };
            let mut ops = OpCounter::default();
            program
                .step(i, &states[i], inbox, &mut ops)
                .and_then(|(state, out)| {
                    if out.len() == topo.degree(i) {
                        Ok((state, out, ops.count()))
                    } else {
                        Err(FaultCause::OutboxSize {
                            expected: topo.degree(i),
                            found: out.len(),
                        })
                    }
                })
        });

        let mut next_states = Vec::with_capacity(n);
        let mut next_messages = Vec::with_capacity(messages.len());
        let mut next_ops = Vec::with_capacity(n);
        for (i, res) in results.into_iter().enumerate() {
            match res {
                Ok((state, out, count)) => {
                    next_states.push(state);
                    next_messages.extend(out);
                    next_ops.push(count);
                }
                Err(cause) => {
                    return RunOutcome {
                        trace,
                        states,
                        messages,
                        stop: StopReason::Fault,
                        fault: Some(SolverFault {
                            node: i,
                            round: k,
                            cause,
                        }),
                    };
                }
            }
        }

        let prev = &trace.rounds.last().expect("round 0 recorded").estimates;
        let rec = record(
            k,
            topo,
            program,
            &next_states,
            &next_messages,
            next_ops,
            Some(prev),
            reference,
        );
        let done = match cfg.stop {
            StopRule::FixedRounds => false,
            StopRule::EstimateDelta(tol) => delta_stop(prev, &rec.estimates, tol),
            StopRule::ErrorBelow(tol) => rec.log10_mse.is_some_and(|e| e <= tol.log10()),
        };
        trace.rounds.push(rec);
        states = next_states;
        messages = next_messages;
        observer(k, &states, &messages);
        if done {
            return RunOutcome {
                trace,
                states,
                messages,
                stop: StopReason::Converged,
                fault: None,
            };
        }
    }

    RunOutcome {
        trace,
        states,
        messages,
        stop: StopReason::RoundLimit,
        fault: None,
    }
}

fn map_nodes<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(NodeId) -> T + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn record<P: NodeProgram>(
    k: usize,
    topo: &Topology,
    program: &P,
    states: &[P::State],
    messages: &[P::Message],
    per_node_ops: Vec<usize>,
    prev: Option<&Vec<f64>>,
    reference: Option<&[f64]>,
) -> RoundRecord {
    let estimates: Vec<f64> = states
        .iter()
        .enumerate()
        .map(|(i, s)| program.estimate(i, s))
        .collect();
    let per_node_storage = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let inbox: usize = topo
                .neighbors(i)
                .iter()
                .enumerate()
                .map(|(slot, _)| program.message_words(&messages[topo.reverse(topo.edge_id(i, slot))]))
                .sum();
            program.storage(i, s) + inbox
        })
        .collect();
    RoundRecord {
        k,
        log10_mse: reference.map(|r| log10_mse(&estimates, r)),
        max_delta: prev.map(|p| max_delta(p, &estimates)),
        estimates,
        accounting: RoundAccounting {
            messages_sent: messages.len(),
            per_node_ops,
            per_node_storage,
        },
    }
}
