use proptest::prelude::*;

use walksolve::analysis::{analyze, WalkSummability};
use walksolve::dense::dense_solve;
use walksolve::engine::{run_rounds, run_rounds_observed, EngineConfig, StopReason, Topology};
use walksolve::generate::{generate_instance, CoeffRange, DiagRule, GeneratorKind, GeneratorSpec};
use walksolve::solvers::{
    bp_solve, gauss_seidel_solve, jacobi_solve, BpProgram, SolveConfig, SolveError,
};
use walksolve::{SparseSystem, UndirectedGraph};

fn tree(n: usize, seed: u64, range: CoeffRange) -> SparseSystem {
    generate_instance(&GeneratorSpec {
        kind: GeneratorKind::RandomTree,
        n,
        seed,
        coeff_range: range,
        diag_rule: DiagRule::NeighborCount,
        avg_degree: 0.0,
    })
    .unwrap()
}

fn norm2_error(x: &[f64], r: &[f64]) -> f64 {
    x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn example1_converges_in_four_rounds() {
    let sys = generate_instance(&GeneratorSpec::example1(3)).unwrap();
    let sol = bp_solve(&sys, &SolveConfig::new(50, 1e-10)).unwrap();
    assert_eq!(sol.rounds(), 4);
    assert!(sol.converged);
    assert_eq!(sol.nonpositive_messages, 0);
    let exact = dense_solve(&sys).unwrap();
    assert!(max_rel_diff(&sol.x, &exact) < 1e-12);
    assert!(sol.trace.rounds.iter().all(|r| r.accounting.messages_sent == 12));
}

#[test]
fn tree_round_limit_is_not_convergence() {
    let sys = generate_instance(&GeneratorSpec::example1(3)).unwrap();
    let sol = bp_solve(&sys, &SolveConfig::new(3, 1e-10)).unwrap();
    assert_eq!(sol.rounds(), 3);
    assert!(!sol.converged);
}

#[test]
fn two_hub_loopy_instance_converges() {
    let g = UndirectedGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)]);
    let sys = walksolve::generate::instance_on_graph(
        &g,
        9,
        CoeffRange::new(-1.0, -0.85),
        DiagRule::NeighborCount,
    )
    .unwrap();
    let exact = dense_solve(&sys).unwrap();
    let sol = bp_solve(&sys, &SolveConfig::fixed(200).with_reference(Some(exact.clone()))).unwrap();
    let errs: Vec<f64> = sol
        .trace
        .rounds
        .iter()
        .map(|r| norm2_error(&r.estimates, &exact))
        .collect();
    let hit = errs.iter().position(|&e| e < 1e-8).expect("reaches 1e-8");
    for k in 1..=hit {
        assert!(errs[k] <= errs[k - 1] * (1.0 + 1e-12), "error rose at round {k}");
    }
}

#[test]
fn disconnected_systems_solve_per_component() {
    // A 3-node path next to an isolated node and a 2-node edge.
    let sys = SparseSystem::new(
        6,
        [
            (0, 0, 2.0),
            (0, 1, -0.5),
            (1, 0, -0.7),
            (1, 1, 2.0),
            (1, 2, -0.3),
            (2, 1, -0.9),
            (2, 2, 1.0),
            (3, 3, 5.0),
            (4, 4, 1.0),
            (4, 5, 0.4),
            (5, 4, -0.2),
            (5, 5, 1.0),
        ],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    )
    .unwrap();
    let sol = bp_solve(&sys, &SolveConfig::new(10, 1e-12)).unwrap();
    assert_eq!(sol.rounds(), 2);
    assert!(max_rel_diff(&sol.x, &dense_solve(&sys).unwrap()) < 1e-14);
}

#[test]
fn reference_length_is_checked() {
    let sys = generate_instance(&GeneratorSpec::example1(0)).unwrap();
    let err = jacobi_solve(&sys, &SolveConfig::fixed(1).with_reference(Some(vec![0.0; 3])));
    assert_eq!(err.unwrap_err(), SolveError::ReferenceLength { expected: 7, found: 3 });
}

#[test]
fn gauss_seidel_and_jacobi_agree_on_the_limit() {
    let sys = generate_instance(&GeneratorSpec::example2(12, 4)).unwrap();
    let exact = dense_solve(&sys).unwrap();
    let gs = gauss_seidel_solve(&sys, &SolveConfig::new(5000, 1e-14)).unwrap();
    let jac = jacobi_solve(&sys, &SolveConfig::new(20000, 1e-14)).unwrap();
    assert!(gs.converged && jac.converged);
    assert!(max_rel_diff(&gs.x, &exact) < 1e-10);
    assert!(max_rel_diff(&jac.x, &exact) < 1e-10);
    assert!(gs.rounds() < jac.rounds());
}

#[test]
fn parallel_evaluation_gives_identical_traces() {
    let sys = generate_instance(&GeneratorSpec::example3(150, 8.0, 2)).unwrap();
    let topo = Topology::new(&UndirectedGraph::induced(&sys));
    let prog = BpProgram::new(&sys, &topo);
    let cfg = EngineConfig::fixed(15);
    let a = run_rounds(&topo, &prog, &cfg);
    let b = run_rounds(&topo, &prog, &cfg.clone().parallel(true));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.messages, b.messages);
}

#[test]
fn flipped_add_back_breaks_tree_exactness() {
    let sys = generate_instance(&GeneratorSpec::example1(1)).unwrap();
    let topo = Topology::new(&UndirectedGraph::induced(&sys));
    let prog = BpProgram::new(&sys, &topo).with_flipped_add_back();
    let out = run_rounds(&topo, &prog, &EngineConfig::fixed(4));
    if out.stop != StopReason::Fault {
        let exact = dense_solve(&sys).unwrap();
        assert!(max_rel_diff(out.estimates(), &exact) > 1e-6);
    }
}

/// Walk-set containment orders the errors only when no cancellation is
/// possible; with mixed signs the extra walks can move the estimate away.
#[test]
fn mixed_sign_trees_can_favour_jacobi() {
    let sys = tree(13, 17995626359669858912, CoeffRange::new(-1.0, 1.0));
    let exact = dense_solve(&sys).unwrap();
    let cfg = SolveConfig::fixed(2);
    let bp = bp_solve(&sys, &cfg).unwrap();
    let jac = jacobi_solve(&sys, &cfg).unwrap();
    assert!(norm2_error(&bp.x, &exact) > norm2_error(&jac.x, &exact));
}

fn walk_summable_tree() -> impl Strategy<Value = SparseSystem> {
    (2usize..=64, any::<u64>(), prop::bool::ANY).prop_map(|(n, seed, mixed)| {
        let range = if mixed {
            CoeffRange::new(-1.0, 1.0)
        } else {
            CoeffRange::new(-1.0, -0.05)
        };
        tree(n, seed, range)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trees_are_exact_at_diameter_and_stationary_after(sys in walk_summable_tree()) {
        prop_assert_eq!(analyze(&sys).walk_summable, WalkSummability::Yes);
        let g = UndirectedGraph::induced(&sys);
        let d = g.diameter();
        let sol = bp_solve(&sys, &SolveConfig::new(1000, 1e-12)).unwrap();
        prop_assert_eq!(sol.rounds(), d);
        let exact = dense_solve(&sys).unwrap();
        prop_assert!(max_rel_diff(&sol.x, &exact) < 1e-10);

        let topo = Topology::new(&g);
        let prog = BpProgram::new(&sys, &topo);
        let mut history = Vec::new();
        run_rounds_observed(&topo, &prog, &EngineConfig::fixed(d + 3), |_, _, m| history.push(m.to_vec()));
        let base = &history[d.saturating_sub(1)];
        for later in &history[d..] {
            for (m, b) in later.iter().zip(base) {
                prop_assert!((m.a - b.a).abs() <= 1e-12 * b.a.abs());
                prop_assert!((m.b - b.b).abs() <= 1e-12 * b.b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn messages_stay_positive(n in 3usize..40, seed in any::<u64>(), mixed in prop::bool::ANY) {
        let mut spec = GeneratorSpec::example2(n, seed);
        if mixed {
            spec.coeff_range = CoeffRange::new(-1.0, 1.0);
        }
        let sys = generate_instance(&spec).unwrap();
        let sol = bp_solve(&sys, &SolveConfig::fixed(60)).unwrap();
        prop_assert_eq!(sol.nonpositive_messages, 0);
    }

    #[test]
    fn jacobi_converges_on_walk_summable_systems(n in 3usize..25, seed in any::<u64>()) {
        let mut spec = GeneratorSpec::example2(n, seed);
        spec.coeff_range = CoeffRange::new(-0.9, 0.9);
        let sys = generate_instance(&spec).unwrap();
        let sol = jacobi_solve(&sys, &SolveConfig::new(20000, 1e-13)).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(max_rel_diff(&sol.x, &dense_solve(&sys).unwrap()) < 1e-9);
    }

    #[test]
    fn row_scaling_does_not_change_iterates(
        n in 3usize..20,
        seed in any::<u64>(),
        scales in prop::collection::vec(0.01f64..100.0, 20),
    ) {
        let sys = generate_instance(&GeneratorSpec::example2(n, seed)).unwrap();
        let scaled = sys.row_scaled(&scales[..n]);
        let cfg = SolveConfig::fixed(30);
        let (j1, j2) = (jacobi_solve(&sys, &cfg).unwrap(), jacobi_solve(&scaled, &cfg).unwrap());
        for (a, b) in j1.trace.rounds.iter().zip(&j2.trace.rounds) {
            prop_assert!(max_rel_diff(&a.estimates, &b.estimates) < 1e-12);
        }
        let (b1, b2) = (bp_solve(&sys, &cfg).unwrap(), bp_solve(&scaled, &cfg).unwrap());
        for (a, b) in b1.trace.rounds.iter().zip(&b2.trace.rounds) {
            prop_assert!(max_rel_diff(&a.estimates, &b.estimates) < 1e-12);
        }
    }

    /// On a tree the message-passing iterate at round `k` sums every walk
    /// inside the `k`-hop ball, a superset of the walks of length `<= k`
    /// that make up the Jacobi iterate. With `R >= 0` and `b > 0` every walk
    /// weight is positive, so the larger set is closer to `x*`.
    #[test]
    fn bp_error_never_exceeds_jacobi_error_on_trees(n in 2usize..40, seed in any::<u64>()) {
        let sys = tree(n, seed, CoeffRange::new(-1.0, -0.05));
        let exact = dense_solve(&sys).unwrap();
        let d = UndirectedGraph::induced(&sys).diameter();
        let cfg = SolveConfig::fixed(d + 2);
        let bp = bp_solve(&sys, &cfg).unwrap();
        let jac = jacobi_solve(&sys, &cfg).unwrap();
        for (b, j) in bp.trace.rounds.iter().zip(&jac.trace.rounds) {
            let (eb, ej) = (norm2_error(&b.estimates, &exact), norm2_error(&j.estimates, &exact));
            prop_assert!(eb <= ej * (1.0 + 1e-12) + 1e-12, "round {}: bp {} > jacobi {}", b.k, eb, ej);
        }
    }
}
