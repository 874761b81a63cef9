//! Independent checks of the walk-sum theory behind the message-passing
//! solver.
//!
//! * Walks and their weights, with exhaustive enumeration cross-checked
//!   against matrix powers: `(R^ℓ)_ij` is the weight of all `i -> j` walks of
//!   length `ℓ`.
//! * The restricted subgraph `G_{i\j}(k)` and the Schur-complement closed
//!   form of the message `i -> j` after `k` rounds on a tree.
//! * Unwrapped computation trees: `t` rounds on a loopy graph equal an exact
//!   solve on the depth-`t` unwrapping rooted at the node.
//!
//! None of this shares code with the solvers beyond the system types and
//! the dense LU.

use std::collections::VecDeque;

use thiserror::Error;

use crate::analysis::ResidualMatrix;
use crate::dense::{inverse, solve, DenseMatrix, SingularMatrix};
use crate::engine::{run_rounds, EngineConfig, SolverFault, Topology};
use crate::graph::UndirectedGraph;
use crate::solvers::bp::BpProgram;
use crate::system::{NodeId, SparseSystem};

/// Largest matrix for exhaustive walk enumeration.
pub const MAX_ENUM_NODES: usize = 8;
/// Longest walk length for exhaustive enumeration.
pub const MAX_ENUM_LENGTH: usize = 10;
/// Largest unwrapped computation tree the equivalence check builds.
pub const MAX_UNWRAPPED_NODES: usize = 20_000;
/// Unwrapped trees up to this size are solved densely; larger ones by
/// leaf-to-root elimination.
pub const DENSE_UNWRAPPED_NODES: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("a walk needs at least one node")]
    EmptyWalk,
    #[error("walk step {step} ({from} -> {to}) is not an edge")]
    InvalidWalk { step: usize, from: NodeId, to: NodeId },
    #[error("{what} of {size} exceeds the guard of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(NodeId, NodeId),
    #[error("the message closed form needs an acyclic graph")]
    NotAcyclic,
    #[error("node {0} is out of range")]
    NodeOutOfRange(NodeId),
    #[error(transparent)]
    Singular(#[from] SingularMatrix),
    #[error(transparent)]
    Fault(#[from] SolverFault),
}

/// A walk `(w_0, ..., w_ℓ)`; its length `ℓ` is the number of steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Walk {
    nodes: Vec<NodeId>,
}

impl Walk {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, OracleError> {
        if nodes.is_empty() {
            return Err(OracleError::EmptyWalk);
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn end(&self) -> NodeId {
        *self.nodes.last().expect("walks are nonempty")
    }

    /// Joins `self` (ending at `v`) with `other` (starting at `v`).
    pub fn concat(&self, other: &Walk) -> Option<Walk> {
        (self.end() == other.start()).then(|| Walk {
            nodes: self.nodes.iter().chain(&other.nodes[1..]).copied().collect(),
        })
    }
}

/// Step `u -> v` is allowed iff `u != v` and `{u, v}` is an edge of the
/// induced graph (`r_uv != 0` or `r_vu != 0`).
fn is_step(r: &ResidualMatrix, u: NodeId, v: NodeId) -> bool {
    u != v && (r.get(u, v) != 0.0 || r.get(v, u) != 0.0)
}

/// `φ(w) = Π r_{w_k w_{k+1}}`; 1 for a zero-length walk.
pub fn walk_weight(r: &ResidualMatrix, w: &Walk) -> Result<f64, OracleError> {
    let n = r.n();
    let mut phi = 1.0;
    for (step, pair) in w.nodes.windows(2).enumerate() {
        let (u, v) = (pair[0], pair[1]);
        if u >= n || v >= n || !is_step(r, u, v) {
            return Err(OracleError::InvalidWalk { step, from: u, to: v });
        }
        phi *= r.get(u, v);
    }
    if let Some(&u) = w.nodes.iter().find(|&&u| u >= n) {
        return Err(OracleError::NodeOutOfRange(u));
    }
    Ok(phi)
}

/// `φ(W) = Σ_{w∈W} φ(w)`; 0 for the empty set.
pub fn walk_set_weight(r: &ResidualMatrix, walks: &[Walk]) -> Result<f64, OracleError> {
    walks.iter().map(|w| walk_weight(r, w)).sum()
}

fn check_enumeration_guard(r: &ResidualMatrix, len: usize) -> Result<(), OracleError> {
    if r.n() > MAX_ENUM_NODES {
        return Err(OracleError::TooLarge {
            what: "matrix order",
            size: r.n(),
            limit: MAX_ENUM_NODES,
        });
    }
    if len > MAX_ENUM_LENGTH {
        return Err(OracleError::TooLarge {
            what: "walk length",
            size: len,
            limit: MAX_ENUM_LENGTH,
        });
    }
    Ok(())
}

/// Every walk from `i` to `j` of exactly `len` steps, in lexicographic
/// order.
pub fn enumerate_walks(
    r: &ResidualMatrix,
    i: NodeId,
    j: NodeId,
    len: usize,
) -> Result<Vec<Walk>, OracleError> {
    check_enumeration_guard(r, len)?;
    for v in [i, j] {
        if v >= r.n() {
            return Err(OracleError::NodeOutOfRange(v));
        }
    }
    let mut out = Vec::new();
    let mut path = vec![i];
    extend_walks(r, j, len, &mut path, &mut out);
    Ok(out)
}

fn extend_walks(r: &ResidualMatrix, j: NodeId, len: usize, path: &mut Vec<NodeId>, out: &mut Vec<Walk>) {
    let u = *path.last().expect("nonempty");
    if path.len() == len + 1 {
        if u == j {
            out.push(Walk { nodes: path.clone() });
        }
        return;
    }
    for v in 0..r.n() {
        if is_step(r, u, v) {
            path.push(v);
            extend_walks(r, j, len, path, out);
            path.pop();
        }
    }
}

/// Sum of `φ(w)` over walks `i -> j` of length at most `max_len`, by
/// depth-first enumeration without materialising the walks.
fn enumerated_sum(r: &ResidualMatrix, i: NodeId, j: NodeId, max_len: usize) -> f64 {
    fn dfs(r: &ResidualMatrix, u: NodeId, j: NodeId, depth: usize, max_len: usize, phi: f64) -> f64 {
        let mut total = if u == j { phi } else { 0.0 };
        if depth < max_len {
            for v in 0..r.n() {
                if is_step(r, u, v) {
                    total += dfs(r, v, j, depth + 1, max_len, phi * r.get(u, v));
                }
            }
        }
        total
    }
    dfs(r, i, j, 0, max_len, 1.0)
}

/// The same partial walk sum computed two independent ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialWalkSum {
    pub enumerated: f64,
    /// `Σ_{ℓ=0}^{L} (R^ℓ)_ij`.
    pub matrix_power: f64,
}

impl PartialWalkSum {
    pub fn value(&self) -> f64 {
        self.matrix_power
    }
}

/// Weight of all walks `i -> j` of length at most `max_len`.
pub fn partial_walk_sum(
    r: &ResidualMatrix,
    i: NodeId,
    j: NodeId,
    max_len: usize,
) -> Result<PartialWalkSum, OracleError> {
    check_enumeration_guard(r, max_len)?;
    for v in [i, j] {
        if v >= r.n() {
            return Err(OracleError::NodeOutOfRange(v));
        }
    }
    Ok(PartialWalkSum {
        enumerated: enumerated_sum(r, i, j, max_len),
        matrix_power: power_sums(r, max_len)[max_len][(i, j)],
    })
}

/// `S_L = Σ_{ℓ=0}^{L} R^ℓ` for `L = 0..=max_len`.
pub fn power_sums(r: &ResidualMatrix, max_len: usize) -> Vec<DenseMatrix> {
    let rd = DenseMatrix::from_rows(&r.to_dense());
    let mut power = DenseMatrix::identity(r.n());
    let mut sum = power.clone();
    let mut out = vec![sum.clone()];
    for _ in 0..max_len {
        power = power.mul(&rd);
        for a in 0..r.n() {
            for b in 0..r.n() {
                sum[(a, b)] += power[(a, b)];
            }
        }
        out.push(sum.clone());
    }
    out
}

/// `(I - R)⁻¹`, the limit of the partial walk sums when `ρ(|R|) < 1`.
pub fn walk_sum_limit(r: &ResidualMatrix) -> Result<DenseMatrix, OracleError> {
    let n = r.n();
    let mut m = DenseMatrix::identity(n);
    for (a, b, v) in r.matrix().triplets() {
        m[(a, b)] -= v;
    }
    Ok(inverse(&m)?)
}

/// `ρ^{L+1} / (1 - ρ)`: bounds the tail `Σ_{ℓ>L} (R̄^ℓ)_ij` of every
/// diagonal entry, and of every entry when `R̄` is symmetric.
pub fn geometric_tail_bound(rho: f64, max_len: usize) -> f64 {
    assert!((0.0..1.0).contains(&rho), "tail bound needs 0 <= rho < 1");
    rho.powi(max_len as i32 + 1) / (1.0 - rho)
}

/// Entry-wise tail bound from a positive Perron vector `v` of `R̄`:
/// `(R̄^ℓ)_ij <= ρ^ℓ v_i / v_j`.
pub fn perron_tail_bound(rho: f64, perron: &[f64], i: NodeId, j: NodeId, max_len: usize) -> f64 {
    geometric_tail_bound(rho, max_len) * perron[i] / perron[j]
}

/// Nodes of `G_{i\j}(k)`, sorted: those reachable from `i` within `k` hops
/// without passing through `j`.
///
/// On a tree this is the subtree on `i`'s side of edge `(i, j)` truncated at
/// depth `k`.
pub fn restricted_subgraph(
    g: &UndirectedGraph,
    i: NodeId,
    j: NodeId,
    k: usize,
) -> Result<Vec<NodeId>, OracleError> {
    if i >= g.node_count() || j >= g.node_count() || !g.has_edge(i, j) {
        return Err(OracleError::NotAnEdge(i, j));
    }
    let mut depth = vec![None; g.node_count()];
    depth[i] = Some(0);
    depth[j] = Some(usize::MAX);
    let mut queue = VecDeque::from([i]);
    let mut out = vec![i];
    while let Some(u) = queue.pop_front() {
        let du = depth[u].expect("queued nodes have a depth");
        if du == k {
            continue;
        }
        for &v in g.neighbors(u) {
            if depth[v].is_none() {
                depth[v] = Some(du + 1);
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Closed form of the message `i -> j` after `k` rounds on a tree.
///
/// With `S = G_{i\j}(k)`, returns `a = 1 / (A_S⁻¹)_ii`, the Schur complement
/// of `A_S` onto `i`, and `b = a · (A_S⁻¹ b_S)_i`.
pub fn message_oracle(
    sys: &SparseSystem,
    i: NodeId,
    j: NodeId,
    k: usize,
) -> Result<(f64, f64), OracleError> {
    let g = UndirectedGraph::induced(sys);
    if !g.is_acyclic() {
        return Err(OracleError::NotAcyclic);
    }
    let s = restricted_subgraph(&g, i, j, k)?;
    let m = s.len();
    let mut a_s = DenseMatrix::zeros(m);
    for (p, &u) in s.iter().enumerate() {
        for (q, &v) in s.iter().enumerate() {
            a_s[(p, q)] = sys.a(u, v);
        }
    }
    let b_s: Vec<f64> = s.iter().map(|&u| sys.rhs()[u]).collect();
    let pos = s.binary_search(&i).expect("i is in its own subgraph");
    let inv = inverse(&a_s)?;
    let a = 1.0 / inv[(pos, pos)];
    let x = solve(&a_s, &b_s)?;
    Ok((a, a * x[pos]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeNode {
    pub id: usize,
    pub original: NodeId,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// Computation tree of a graph, listed in breadth-first order.
///
/// The root replicates the chosen node. Each node at depth `< t` gets one
/// child per neighbour of its original, except the original of its parent,
/// in ascending order of original id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnwrappedTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl UnwrappedTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.nodes.last().map_or(0, |n| n.depth)
    }

    /// Number of nodes at each depth.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.depth() + 1];
        for n in &self.nodes {
            sizes[n.depth] += 1;
        }
        sizes
    }

    /// The linear system on the tree, with every entry copied from the
    /// originals: `A_T[u, v] = a_{orig(u), orig(v)}` for tree edges and the
    /// diagonal, `b_T[u] = b_{orig(u)}`.
    pub fn system(&self, sys: &SparseSystem) -> SparseSystem {
        let mut triplets = Vec::with_capacity(3 * self.len());
        let mut rhs = Vec::with_capacity(self.len());
        for n in &self.nodes {
            triplets.push((n.id, n.id, sys.diag()[n.original]));
            rhs.push(sys.rhs()[n.original]);
            if let Some(p) = n.parent {
                let po = self.nodes[p].original;
                triplets.push((p, n.id, sys.a(po, n.original)));
                triplets.push((n.id, p, sys.a(n.original, po)));
            }
        }
        SparseSystem::new(self.len(), triplets, rhs).expect("copied entries form a valid system")
    }
}

/// Depth-`t` computation tree of `g` rooted at `root`, or `TooLarge` once
/// it would exceed `limit` nodes.
pub fn unwrap_tree_limited(
    g: &UndirectedGraph,
    root: NodeId,
    t: usize,
    limit: usize,
) -> Result<UnwrappedTree, OracleError> {
    if root >= g.node_count() {
        return Err(OracleError::NodeOutOfRange(root));
    }
    let mut nodes = vec![TreeNode {
        id: 0,
        original: root,
        parent: None,
        depth: 0,
    }];
    let mut layer = 0..1;
    for depth in 1..=t {
        let start = nodes.len();
        for u in layer.clone() {
            let node = nodes[u];
            let skip = node.parent.map(|p| nodes[p].original);
            for &v in g.neighbors(node.original) {
                if Some(v) == skip {
                    continue;
                }
                if nodes.len() == limit {
                    return Err(OracleError::TooLarge {
                        what: "unwrapped tree",
                        size: limit + 1,
                        limit,
                    });
                }
                nodes.push(TreeNode {
                    id: nodes.len(),
                    original: v,
                    parent: Some(u),
                    depth,
                });
            }
        }
        layer = start..nodes.len();
    }
    Ok(UnwrappedTree { nodes, root: 0 })
}

pub fn unwrap_tree(g: &UndirectedGraph, root: NodeId, t: usize) -> UnwrappedTree {
    unwrap_tree_limited(g, root, t, usize::MAX).expect("no size limit")
}

/// Root component of the exact solution on an unwrapped tree.
pub fn unwrapped_root_value(tree: &UnwrappedTree, sys: &SparseSystem) -> Result<f64, OracleError> {
    let tsys = tree.system(sys);
    if tree.len() <= DENSE_UNWRAPPED_NODES {
        let x = solve(&DenseMatrix::from_system(&tsys), tsys.rhs())?;
        return Ok(x[tree.root]);
    }
    eliminate_tree(tree, &tsys)
}

/// Leaf-to-root elimination. Breadth-first order lists parents before
/// children, so a reverse sweep eliminates every subtree before its parent.
fn eliminate_tree(tree: &UnwrappedTree, tsys: &SparseSystem) -> Result<f64, OracleError> {
    let mut a: Vec<f64> = tsys.diag().to_vec();
    let mut b: Vec<f64> = tsys.rhs().to_vec();
    for n in tree.nodes.iter().rev() {
        if let Some(p) = n.parent {
            if a[n.id] == 0.0 {
                return Err(SingularMatrix { step: n.id }.into());
            }
            a[p] -= tsys.a(p, n.id) * tsys.a(n.id, p) / a[n.id];
            b[p] -= tsys.a(p, n.id) * b[n.id] / a[n.id];
        }
    }
    if a[tree.root] == 0.0 {
        return Err(SingularMatrix { step: tree.root }.into());
    }
    Ok(b[tree.root] / a[tree.root])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    /// Exact root value on the depth-`t` computation tree.
    pub unwrapped: f64,
    /// Estimate `x̂_i(t)` after `t` rounds on the original graph.
    pub message_passing: f64,
    pub tree_nodes: usize,
}

impl Equivalence {
    pub fn agrees(&self, rel_tol: f64) -> bool {
        relative_close(self.unwrapped, self.message_passing, rel_tol)
    }
}

/// `|a - b| <= tol * max(|a|, |b|)`.
pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Compares `t` rounds of message passing at node `i` with the exact
/// solution of the depth-`t` computation tree rooted at `i`.
pub fn unwrapped_equivalence(sys: &SparseSystem, i: NodeId, t: usize) -> Result<Equivalence, OracleError> {
    let g = UndirectedGraph::induced(sys);
    let tree = unwrap_tree_limited(&g, i, t, MAX_UNWRAPPED_NODES)?;
    let unwrapped = unwrapped_root_value(&tree, sys)?;
    let topo = Topology::new(&g);
    let program = BpProgram::new(sys, &topo);
    let out = run_rounds(&topo, &program, &EngineConfig::fixed(t));
    if let Some(fault) = out.fault {
        return Err(OracleError::Fault(fault));
    }
    let message_passing = out.estimates()[i];
    Ok(Equivalence {
        unwrapped,
        message_passing,
        tree_nodes: tree.len(),
    })
}

/// [`unwrapped_equivalence`] at relative tolerance `1e-10`.
pub fn unwrapped_equivalence_check(sys: &SparseSystem, i: NodeId, t: usize) -> Result<bool, OracleError> {
    Ok(unwrapped_equivalence(sys, i, t)?.agrees(1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r2() -> ResidualMatrix {
        ResidualMatrix::from_dense(&[vec![0.0, 0.5], vec![0.25, 0.0]])
    }

    fn two_hub() -> UndirectedGraph {
        UndirectedGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)])
    }

    #[test]
    fn walk_weights() {
        let r = r2();
        assert_eq!(walk_weight(&r, &Walk::new(vec![0]).unwrap()).unwrap(), 1.0);
        assert_eq!(walk_weight(&r, &Walk::new(vec![0, 1, 0]).unwrap()).unwrap(), 0.125);
        assert_eq!(walk_set_weight(&r, &[]).unwrap(), 0.0);
        assert!(matches!(
            walk_weight(&r, &Walk::new(vec![0, 0]).unwrap()),
            Err(OracleError::InvalidWalk { step: 0, .. })
        ));
        assert_eq!(Walk::new(vec![]), Err(OracleError::EmptyWalk));
    }

    #[test]
    fn partial_sums_on_two_nodes() {
        let r = r2();
        let s = partial_walk_sum(&r, 0, 0, 4).unwrap();
        assert!((s.enumerated - 1.140625).abs() < 1e-15);
        assert!((s.matrix_power - 1.140625).abs() < 1e-15);
        assert_eq!(partial_walk_sum(&r, 0, 1, 0).unwrap().value(), 0.0);
        let limit = walk_sum_limit(&r).unwrap();
        assert!((limit[(0, 0)] - 8.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_guards() {
        let big = ResidualMatrix::from_dense(&vec![vec![0.0; 9]; 9]);
        assert!(matches!(partial_walk_sum(&big, 0, 0, 1), Err(OracleError::TooLarge { .. })));
        assert!(matches!(partial_walk_sum(&r2(), 0, 0, 11), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn restricted_subgraphs() {
        let tree = UndirectedGraph::from_edges(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
        assert_eq!(restricted_subgraph(&tree, 1, 0, 1).unwrap(), vec![1, 3, 4]);
        assert_eq!(restricted_subgraph(&tree, 0, 1, 0).unwrap(), vec![0]);
        assert_eq!(restricted_subgraph(&tree, 0, 1, 9).unwrap(), vec![0, 2, 5, 6]);
        assert_eq!(restricted_subgraph(&tree, 0, 3, 1), Err(OracleError::NotAnEdge(0, 3)));
    }

    #[test]
    fn message_oracle_on_path() {
        // Path 2 - 0 - 1.
        let sys = SparseSystem::new(
            3,
            [
                (0, 0, 2.0),
                (0, 1, -0.3),
                (0, 2, -0.7),
                (1, 0, -0.4),
                (1, 1, 1.5),
                (2, 0, -0.6),
                (2, 2, 3.0),
            ],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        assert_eq!(message_oracle(&sys, 0, 1, 0).unwrap(), (2.0, 1.0));
        let (a, b) = message_oracle(&sys, 0, 1, 1).unwrap();
        assert!((a - (2.0 - 0.7 * 0.6 / 3.0)).abs() < 1e-15);
        assert!((b - (1.0 + 0.7 * 3.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn two_hub_unwrapping_layers() {
        let t = unwrap_tree(&two_hub(), 0, 4);
        assert_eq!(t.layer_sizes(), vec![1, 3, 3, 6, 6]);
        assert_eq!(t.len(), 19);
        assert_eq!(unwrap_tree(&two_hub(), 0, 0).len(), 1);
        assert!(matches!(
            unwrap_tree_limited(&two_hub(), 0, 4, 10),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn tree_elimination_matches_dense_solve() {
        let g = two_hub();
        let edges: Vec<_> = g.edges().collect();
        let triplets = (0..5)
            .map(|i| (i, i, 3.0))
            .chain(edges.iter().flat_map(|&(i, j)| [(i, j, -0.9), (j, i, -0.6)]));
        let sys = SparseSystem::new(5, triplets, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let tree = unwrap_tree(&g, 0, 4);
        let tsys = tree.system(&sys);
        let dense = solve(&DenseMatrix::from_system(&tsys), tsys.rhs()).unwrap()[0];
        assert!(relative_close(eliminate_tree(&tree, &tsys).unwrap(), dense, 1e-13));
        assert_eq!(unwrapped_root_value(&tree, &sys).unwrap(), dense);
    }
}
