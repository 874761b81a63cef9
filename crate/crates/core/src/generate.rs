//! Reproducible instance generators.
//!
//! Every generator uses ChaCha8 (`rand_chacha`), which is portable and
//! stable across platforms and crate versions. Randomness is split into
//! streams so that topology and coefficients do not perturb each other:
//!
//! * stream 0 drives the topology (tree attachment, chords, Erdős–Rényi
//!   draws) for the given seed;
//! * the coefficients of undirected edge `{i, j}` with `i < j` come from
//!   stream `1 + i * n + j` of the same seed, which draws `a_ij` first and
//!   `a_ji` second.
//!
//! All kinds set `b_i = i` (1-based), matching the reference instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::UndirectedGraph;
use crate::system::{NodeId, SparseSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// The fixed 7-node tree with edges 1-2, 1-3, 2-4, 2-5, 3-6, 3-7.
    Example1Tree,
    /// A random connected graph with at least one loop: a random spanning
    /// tree plus `max(1, n / 4)` chords.
    LoopySmall,
    /// Erdős–Rényi graph with expected degree `avg_degree`.
    RandomSparse,
    Path,
    /// Node 1 is the hub.
    Star,
    /// Random recursive tree with shuffled labels.
    RandomTree,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Example1Tree => "example1-tree",
            Self::LoopySmall => "loopy-small",
            Self::RandomSparse => "random-sparse",
            Self::Path => "path",
            Self::Star => "star",
            Self::RandomTree => "random-tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::Example1Tree,
            Self::LoopySmall,
            Self::RandomSparse,
            Self::Path,
            Self::Star,
            Self::RandomTree,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagRule {
    /// `a_ii = |N_i|`, with isolated nodes getting 1.
    NeighborCount,
    Unit,
    Explicit(f64),
}

/// Open interval `(lo, hi)` for off-diagonal coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffRange {
    pub lo: f64,
    pub hi: f64,
}

impl CoeffRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub seed: u64,
    pub coeff_range: CoeffRange,
    pub diag_rule: DiagRule,
    /// Expected degree for `RandomSparse`; ignored by other kinds.
    pub avg_degree: f64,
}

impl GeneratorSpec {
    /// The acyclic recipe: 7-node tree, `a_ii = |N_i|`, off-diagonals in
    /// `(-1, -0.85)`.
    pub fn example1(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Example1Tree,
            n: 7,
            seed,
            coeff_range: CoeffRange::new(-1.0, -0.85),
            diag_rule: DiagRule::NeighborCount,
            avg_degree: 0.0,
        }
    }

    /// Same coefficient recipe on a random loopy graph.
    pub fn example2(n: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::LoopySmall,
            n,
            ..Self::example1(seed)
        }
    }

    /// Large loopy recipe: unit diagonal, off-diagonals in `(-0.05, 0.05)`.
    pub fn example3(n: usize, avg_degree: f64, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::RandomSparse,
            n,
            seed,
            coeff_range: CoeffRange::new(-0.05, 0.05),
            diag_rule: DiagRule::Unit,
            avg_degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("node count must be at least 1")]
    ZeroNodes,
    #[error("{kind} requires n = {required}, got {got}")]
    FixedSize {
        kind: &'static str,
        required: usize,
        got: usize,
    },
    #[error("{kind} requires at least {min} nodes, got {got}")]
    TooSmall {
        kind: &'static str,
        min: usize,
        got: usize,
    },
    #[error("coefficient range ({lo}, {hi}) is empty or not finite")]
    BadRange { lo: f64, hi: f64 },
    #[error("explicit diagonal value {0} must be finite and nonzero")]
    BadDiagonal(f64),
    #[error("average degree {0} must be finite and nonnegative")]
    BadDegree(f64),
}

/// Builds the instance described by `spec`. Identical specs give
/// bit-identical systems.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<SparseSystem, GenerateError> {
    validate(spec)?;
    Ok(fill_coefficients(&topology(spec), spec))
}

/// Puts the coefficient recipe of `spec` on a caller-supplied graph; `kind`,
/// `n` and `avg_degree` are ignored.
pub fn instance_on_graph(
    graph: &UndirectedGraph,
    seed: u64,
    coeff_range: CoeffRange,
    diag_rule: DiagRule,
) -> Result<SparseSystem, GenerateError> {
    let spec = GeneratorSpec {
        kind: GeneratorKind::RandomTree,
        n: graph.node_count(),
        seed,
        coeff_range,
        diag_rule,
        avg_degree: 0.0,
    };
    validate(&spec)?;
    Ok(fill_coefficients(graph, &spec))
}

fn fill_coefficients(graph: &UndirectedGraph, spec: &GeneratorSpec) -> SparseSystem {
    let n = graph.node_count();
    let mut triplets = Vec::with_capacity(n + 2 * graph.edge_count());
    for (i, j) in graph.edges() {
        let mut rng = edge_rng(spec.seed, n, i, j);
        triplets.push((i, j, sample_open(&mut rng, spec.coeff_range)));
        triplets.push((j, i, sample_open(&mut rng, spec.coeff_range)));
    }
    for i in 0..n {
        let d = match spec.diag_rule {
            DiagRule::NeighborCount => graph.degree(i).max(1) as f64,
            DiagRule::Unit => 1.0,
            DiagRule::Explicit(v) => v,
        };
        triplets.push((i, i, d));
    }
    let rhs = (1..=n).map(|i| i as f64).collect();
    SparseSystem::new(n, triplets, rhs).expect("generator output satisfies invariants")
}

fn validate(spec: &GeneratorSpec) -> Result<(), GenerateError> {
    if spec.n == 0 {
        return Err(GenerateError::ZeroNodes);
    }
    let CoeffRange { lo, hi } = spec.coeff_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(GenerateError::BadRange { lo, hi });
    }
    if let DiagRule::Explicit(v) = spec.diag_rule {
        if !v.is_finite() || v == 0.0 {
            return Err(GenerateError::BadDiagonal(v));
        }
    }
    if !(spec.avg_degree.is_finite() && spec.avg_degree >= 0.0) {
        return Err(GenerateError::BadDegree(spec.avg_degree));
    }
    match spec.kind {
        GeneratorKind::Example1Tree if spec.n != 7 => Err(GenerateError::FixedSize {
            kind: spec.kind.name(),
            required: 7,
            got: spec.n,
        }),
        GeneratorKind::LoopySmall if spec.n < 3 => Err(GenerateError::TooSmall {
            kind: spec.kind.name(),
            min: 3,
            got: spec.n,
        }),
        _ => Ok(()),
    }
}

fn edge_rng(seed: u64, n: usize, i: NodeId, j: NodeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (i as u64) * (n as u64) + j as u64);
    rng
}

/// Uniform draw from the open interval, never exactly zero.
fn sample_open(rng: &mut ChaCha8Rng, range: CoeffRange) -> f64 {
    loop {
        let v = rng.random_range(range.lo..range.hi);
        if v != range.lo && v != 0.0 {
            return v;
        }
    }
}

fn topology(spec: &GeneratorSpec) -> UndirectedGraph {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    match spec.kind {
        GeneratorKind::Example1Tree => {
            UndirectedGraph::from_edges(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
        }
        GeneratorKind::Path => UndirectedGraph::from_edges(n, (1..n).map(|i| (i - 1, i))),
        GeneratorKind::Star => UndirectedGraph::from_edges(n, (1..n).map(|i| (0, i))),
        GeneratorKind::RandomTree => UndirectedGraph::from_edges(n, random_tree(&mut rng, n)),
        GeneratorKind::LoopySmall => {
            let mut edges = random_tree(&mut rng, n);
            let tree = UndirectedGraph::from_edges(n, edges.iter().copied());
            let mut candidates: Vec<(NodeId, NodeId)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| !tree.has_edge(i, j))
                .collect();
            let chords = (n / 4).max(1).min(candidates.len());
            for _ in 0..chords {
                let k = rng.random_range(0..candidates.len());
                edges.push(candidates.swap_remove(k));
            }
            UndirectedGraph::from_edges(n, edges)
        }
        GeneratorKind::RandomSparse => {
            let p = if n > 1 {
                (spec.avg_degree / (n - 1) as f64).min(1.0)
            } else {
                0.0
            };
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            UndirectedGraph::from_edges(n, edges)
        }
    }
}

/// Random recursive tree: the k-th node in a shuffled order attaches to a
/// uniformly chosen earlier one.
fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<(NodeId, NodeId)> {
    let mut order: Vec<NodeId> = (0..n).collect();
    for k in (1..n).rev() {
        let m = rng.random_range(0..=k);
        order.swap(k, m);
    }
    (1..n)
        .map(|k| {
            let parent = order[rng.random_range(0..k)];
            (parent, order[k])
        })
        .collect()
}
