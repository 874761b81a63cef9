//! Oracle checks over a seeded ensemble.
//!
//! Every check draws `count` instances with seeds `seed, seed + 1, ...` and
//! sizes cycling up to `n`, runs message passing on the round engine and
//! compares it with an independent computation. Checks whose inputs exceed
//! an oracle's size guard are skipped with a notice rather than failed.

#![allow(clippy::needless_range_loop)]

use std::fmt::Write as _;

use walksolve::analysis::{analyze, residual_matrix, spectral_radius_nonneg, ResidualMatrix, WalkSummability};
use walksolve::dense::dense_solve;
use walksolve::engine::{run_rounds_observed, EngineConfig, Topology};
use walksolve::generate::{generate_instance, CoeffRange, DiagRule, GeneratorKind, GeneratorSpec};
use walksolve::oracle::{
    geometric_tail_bound, message_oracle, partial_walk_sum, power_sums, unwrap_tree_limited,
    unwrapped_root_value, walk_sum_limit, OracleError, MAX_ENUM_LENGTH, MAX_ENUM_NODES,
    MAX_UNWRAPPED_NODES,
};
use walksolve::solvers::{BpMessage, BpProgram};
use walksolve::{SparseSystem, UndirectedGraph};

use crate::commands::{emit, CliError};
use crate::{exit, VerifyArgs};

/// Largest order for which the dense walk-sum checks run.
pub const MAX_DENSE_CHECK: usize = 400;
/// Depth of the computation trees compared against message passing.
const UNWRAP_DEPTH: usize = 6;
/// Walk length for enumeration and tail checks.
const WALK_LENGTH: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass(String),
    Fail { seed: u64, detail: String },
    Skip(String),
}

struct Ensemble {
    seed: u64,
    max_n: usize,
    count: usize,
    mutate: bool,
}

impl Ensemble {
    fn seeds(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        (0..self.count).map(|idx| (idx, self.seed.wrapping_add(idx as u64)))
    }

    /// Cycles through `min..=max_n`.
    fn size(&self, idx: usize, min: usize) -> usize {
        min + idx % (self.max_n + 1 - min)
    }

    fn tree(&self, idx: usize, seed: u64) -> SparseSystem {
        generate_instance(&GeneratorSpec {
            kind: GeneratorKind::RandomTree,
            n: self.size(idx, 2),
            seed,
            coeff_range: CoeffRange::new(-1.0, 1.0),
            diag_rule: DiagRule::NeighborCount,
            avg_degree: 0.0,
        })
        .expect("valid tree spec")
    }

    fn loopy(&self, idx: usize, seed: u64) -> SparseSystem {
        generate_instance(&GeneratorSpec::example2(self.size(idx, 3), seed)).expect("valid loopy spec")
    }

    /// Messages and estimates for rounds `0..=rounds`.
    fn run(&self, sys: &SparseSystem, rounds: usize) -> (Topology, Vec<Vec<BpMessage>>, Vec<Vec<f64>>) {
        let topo = Topology::new(&UndirectedGraph::induced(sys));
        let mut program = BpProgram::new(sys, &topo);
        if self.mutate {
            program = program.with_flipped_add_back();
        }
        let mut messages = Vec::with_capacity(rounds + 1);
        let out = run_rounds_observed(&topo, &program, &EngineConfig::fixed(rounds), |_, _, m| {
            messages.push(m.to_vec())
        });
        let estimates = out.trace.rounds.into_iter().map(|r| r.estimates).collect();
        (topo, messages, estimates)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn completed(messages: &[Vec<BpMessage>], rounds: usize, seed: u64) -> Result<(), Outcome> {
    if messages.len() == rounds + 1 {
        Ok(())
    } else {
        Err(Outcome::Fail {
            seed,
            detail: format!("message passing faulted in round {}", messages.len()),
        })
    }
}

macro_rules! check {
    ($seed:expr, $cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Outcome::Fail { seed: $seed, detail: format!($($fmt)+) };
        }
    };
}

macro_rules! try_outcome {
    ($e:expr) => {
        if let Err(o) = $e {
            return o;
        }
    };
}

fn message_oracle_check(e: &Ensemble) -> Outcome {
    let (mut pairs, mut worst) = (0usize, 0.0f64);
    for (idx, seed) in e.seeds() {
        let sys = e.tree(idx, seed);
        let d = UndirectedGraph::induced(&sys).diameter();
        let (topo, hist, _) = e.run(&sys, d);
        try_outcome!(completed(&hist, d, seed));
        for (k, round) in hist.iter().enumerate() {
            for (edge, m) in round.iter().enumerate() {
                let (i, j) = (topo.source(edge), topo.target(edge));
                let (a, b) = match message_oracle(&sys, i, j, k) {
                    Ok(v) => v,
                    Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
                };
                let diff = rel(m.a, a).max((m.b - b).abs() / b.abs().max(1.0));
                worst = worst.max(diff);
                pairs += 1;
                check!(seed, diff <= 1e-12, "message {}->{} at k={k}: ({}, {}) vs oracle ({a}, {b})", i + 1, j + 1, m.a, m.b);
            }
        }
    }
    Outcome::Pass(format!("{} trees, {pairs} (message, round) pairs, max rel diff {worst:.1e}", e.count))
}

fn tree_exactness_check(e: &Ensemble) -> Outcome {
    let mut worst = 0.0f64;
    for (idx, seed) in e.seeds() {
        let sys = e.tree(idx, seed);
        let exact = dense_solve(&sys).expect("walk-summable trees are nonsingular");
        let d = UndirectedGraph::induced(&sys).diameter();
        let (_, hist, est) = e.run(&sys, d + 2);
        try_outcome!(completed(&hist, d + 2, seed));
        for k in d..=d + 2 {
            for (i, (x, r)) in est[k].iter().zip(&exact).enumerate() {
                let diff = (x - r).abs() / r.abs().max(1.0);
                worst = worst.max(diff);
                check!(seed, diff <= 1e-10, "node {} at k={k}: {x} vs exact {r}", i + 1);
            }
        }
        let base = &hist[d.saturating_sub(1)];
        for k in d..=d + 2 {
            for (m, b) in hist[k].iter().zip(base) {
                check!(seed, rel(m.a, b.a) <= 1e-12 && (m.b - b.b).abs() <= 1e-12 * b.b.abs().max(1.0),
                    "messages still moving at k={k} (diameter {d})");
            }
        }
    }
    Outcome::Pass(format!("{} trees exact from k = diameter, max rel err {worst:.1e}", e.count))
}

fn walk_enumeration_check(e: &Ensemble) -> Outcome {
    if e.max_n > MAX_ENUM_NODES {
        return Outcome::Skip(format!("n = {} exceeds the enumeration guard ({MAX_ENUM_NODES})", e.max_n));
    }
    let len = WALK_LENGTH.min(MAX_ENUM_LENGTH);
    let mut worst = 0.0f64;
    for (idx, seed) in e.seeds() {
        let sys = e.loopy(idx, seed);
        let r = residual_matrix(&sys).expect("nonzero diagonal");
        for i in 0..sys.n() {
            for j in 0..sys.n() {
                let s = match partial_walk_sum(&r, i, j, len) {
                    Ok(s) => s,
                    Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
                };
                let diff = (s.enumerated - s.matrix_power).abs() / s.matrix_power.abs().max(1.0);
                worst = worst.max(diff);
                check!(seed, diff <= 1e-12, "walks {}->{} up to length {len}: enumerated {} vs powers {}",
                    i + 1, j + 1, s.enumerated, s.matrix_power);
            }
        }
    }
    Outcome::Pass(format!("{} loopy instances, walks up to length {len}, max rel diff {worst:.1e}", e.count))
}

/// Walk-sum limit equals the solution, and partial sums of `|R|^ℓ` obey
/// the Perron-weighted geometric tail bound.
fn walk_sum_limit_check(e: &Ensemble) -> Outcome {
    if e.max_n > MAX_DENSE_CHECK {
        return Outcome::Skip(format!("n = {} exceeds the dense check limit ({MAX_DENSE_CHECK})", e.max_n));
    }
    let mut worst = 0.0f64;
    for (idx, seed) in e.seeds() {
        let sys = e.loopy(idx, seed);
        check!(seed, analyze(&sys).walk_summable == WalkSummability::Yes, "instance is not walk-summable");
        let r = residual_matrix(&sys).expect("nonzero diagonal");
        let exact = dense_solve(&sys).expect("walk-summable systems are nonsingular");
        let limit = match walk_sum_limit(&r) {
            Ok(m) => m,
            Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
        };
        let h: Vec<f64> = sys.rhs().iter().zip(sys.diag()).map(|(b, a)| b / a).collect();
        for (i, (x, r)) in limit.mul_vec(&h).iter().zip(&exact).enumerate() {
            let diff = (x - r).abs() / r.abs().max(1.0);
            worst = worst.max(diff);
            check!(seed, diff <= 1e-10, "walk-sum limit at node {}: {x} vs exact {r}", i + 1);
        }

        let rbar = ResidualMatrix::from_dense(&r.abs().to_dense());
        let est = match spectral_radius_nonneg(rbar.matrix(), 1e-13, 1_000_000) {
            Ok(est) => est,
            Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
        };
        let Some(v) = est.perron_vector else {
            return Outcome::Fail { seed, detail: "|R| is reducible on a connected graph".into() };
        };
        let rho = est.upper;
        check!(seed, rho < 1.0, "rho(|R|) upper bound {rho} is not below 1");
        let full = match walk_sum_limit(&rbar) {
            Ok(m) => m,
            Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
        };
        for (l, s) in power_sums(&rbar, WALK_LENGTH).iter().enumerate() {
            for i in 0..sys.n() {
                for j in 0..sys.n() {
                    let tail = full[(i, j)] - s[(i, j)];
                    let bound = geometric_tail_bound(rho, l) * v[i] / v[j];
                    check!(seed, tail <= bound * (1.0 + 1e-9) + 1e-12,
                        "tail of |R| walks {}->{} beyond length {l}: {tail} exceeds {bound}", i + 1, j + 1);
                }
            }
        }
    }
    Outcome::Pass(format!("{} loopy instances, limit max rel err {worst:.1e}, tail bounds hold up to length {WALK_LENGTH}", e.count))
}

fn unwrapped_check(e: &Ensemble) -> Outcome {
    let (mut compared, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
    for (idx, seed) in e.seeds() {
        let sys = e.loopy(idx, seed);
        let g = UndirectedGraph::induced(&sys);
        let (_, hist, est) = e.run(&sys, UNWRAP_DEPTH);
        try_outcome!(completed(&hist, UNWRAP_DEPTH, seed));
        for t in 0..=UNWRAP_DEPTH {
            for i in 0..sys.n() {
                let tree = match unwrap_tree_limited(&g, i, t, MAX_UNWRAPPED_NODES) {
                    Ok(tree) => tree,
                    Err(OracleError::TooLarge { .. }) => {
                        skipped += 1;
                        continue;
                    }
                    Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
                };
                let u = match unwrapped_root_value(&tree, &sys) {
                    Ok(u) => u,
                    Err(err) => return Outcome::Fail { seed, detail: err.to_string() },
                };
                let diff = rel(u, est[t][i]);
                worst = worst.max(diff);
                compared += 1;
                check!(seed, diff <= 1e-10, "node {} at t={t}: message passing {} vs computation tree {u}", i + 1, est[t][i]);
            }
        }
    }
    if compared == 0 {
        return Outcome::Skip(format!("every computation tree exceeds the guard ({MAX_UNWRAPPED_NODES} nodes)"));
    }
    let mut s = format!("{compared} (node, depth) pairs up to depth {UNWRAP_DEPTH}, max rel diff {worst:.1e}");
    if skipped > 0 {
        write!(s, "; {skipped} skipped above {MAX_UNWRAPPED_NODES} tree nodes").expect("writing to a String");
    }
    Outcome::Pass(s)
}

fn positivity_check(e: &Ensemble) -> Outcome {
    const ROUNDS: usize = 40;
    let mut total = 0usize;
    for (idx, seed) in e.seeds() {
        for sys in [e.tree(idx, seed), e.loopy(idx, seed)] {
            let (topo, hist, _) = e.run(&sys, ROUNDS);
            try_outcome!(completed(&hist, ROUNDS, seed));
            for (k, round) in hist.iter().enumerate() {
                for (edge, m) in round.iter().enumerate() {
                    check!(seed, m.a > 0.0, "message {}->{} at k={k} has a = {}",
                        topo.source(edge) + 1, topo.target(edge) + 1, m.a);
                }
                total += round.len();
            }
        }
    }
    Outcome::Pass(format!("{total} messages over {ROUNDS} rounds, all positive"))
}

type Check = (&'static str, fn(&Ensemble) -> Outcome);

const CHECKS: [Check; 6] = [
    ("message-oracle", message_oracle_check),
    ("tree-exactness", tree_exactness_check),
    ("walk-enumeration", walk_enumeration_check),
    ("walk-sum-limit", walk_sum_limit_check),
    ("unwrapped-tree", unwrapped_check),
    ("message-positivity", positivity_check),
];

pub fn run(a: &VerifyArgs) -> Result<u8, CliError> {
    let ensemble = Ensemble {
        seed: a.seed,
        max_n: a.n as usize,
        count: a.count as usize,
        mutate: a.mutate_add_back,
    };
    let mut report = String::new();
    let (mut passed, mut skipped) = (0, 0);
    let mut first_failure = None;
    for (name, check) in CHECKS {
        let line = match check(&ensemble) {
            Outcome::Pass(detail) => {
                passed += 1;
                format!("PASS {name}: {detail}")
            }
            Outcome::Skip(why) => {
                skipped += 1;
                format!("SKIP {name}: {why}")
            }
            Outcome::Fail { seed, detail } => {
                first_failure.get_or_insert((name, seed));
                format!("FAIL {name}: seed {seed}: {detail}")
            }
        };
        writeln!(report, "{line}").expect("writing to a String");
    }
    let failed = CHECKS.len() - passed - skipped;
    writeln!(report, "verify: {passed} passed, {failed} failed, {skipped} skipped").expect("writing to a String");
    emit(a.out.as_deref(), &report)?;
    match first_failure {
        None => Ok(exit::OK),
        Some((name, seed)) => {
            eprintln!("verification failed: check {name}, seed {seed}");
            Ok(exit::FAILURE)
        }
    }
}
