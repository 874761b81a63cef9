use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn walksolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walksolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates an instance and returns `(matrix, rhs)` paths.
fn generated(dir: &TempDir, kind: &str, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let m = dir.path().join(format!("{kind}-{n}-{seed}.mtx"));
    let o = walksolve(&[
        "generate",
        "--kind",
        kind,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path_str(&m),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rhs = m.with_extension("rhs");
    (m, rhs)
}

fn solve(m: &Path, b: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--matrix", path_str(m), "--rhs", path_str(b)];
    args.extend_from_slice(extra);
    walksolve(&args)
}

fn csv_rows(o: &Output) -> Vec<Vec<String>> {
    String::from_utf8(o.stdout.clone())
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn example1_bp_converges_at_four() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "example1-tree", 7, 3);
    let o = solve(&m, &b, &["--method", "bp"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# method=bp mode=distributed"));
    assert_eq!(lines.next(), Some("iter,log10_mse,max_delta,messages"));
    let rows = csv_rows(&o);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4][0], "4");
    assert!(rows[4][1].parse::<f64>().unwrap() < -20.0);
    assert_eq!(rows[0][2], "");
    assert!(rows.iter().all(|r| r[3] == "12"));
}

#[test]
fn jacobi_hits_the_iteration_limit() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "example1-tree", 7, 3);
    let o = solve(&m, &b, &["--method", "jacobi", "--max-iters", "4"]);
    assert_eq!(code(&o), 2);
    assert_eq!(csv_rows(&o).len(), 5);
}

#[test]
fn gauss_seidel_is_labelled_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "example1-tree", 7, 3);
    let o = solve(&m, &b, &["--method", "gauss-seidel"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(text.starts_with("# method=gauss-seidel mode=sequential-reference\n"));
    assert!(csv_rows(&o).iter().all(|r| r[3] == "0"));
}

#[test]
fn solution_file_matches_dense_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "loopy-small", 12, 5);
    let x = dir.path().join("x.txt");
    let o = solve(&m, &b, &["--tol", "1e-13", "--solution", path_str(&x)]);
    assert_eq!(code(&o), 0);
    let sys = walksolve_cli::mtx::read_system(&m, Some(&b)).unwrap();
    let exact = walksolve::dense::dense_solve(&sys).unwrap();
    let got = walksolve_cli::mtx::read_rhs(&x).unwrap();
    for (g, e) in got.iter().zip(&exact) {
        assert!((g - e).abs() <= 1e-9 * e.abs().max(1.0));
    }
}

#[test]
fn without_reference_the_error_column_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "loopy-small", 10, 1);
    let o = solve(&m, &b, &["--reference", "none"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&o);
    assert!(rows.iter().all(|r| r[1].is_empty()));
    assert!(rows[1..].iter().all(|r| !r[2].is_empty()));
}

#[test]
fn non_walk_summable_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("a.mtx");
    let b = dir.path().join("b.rhs");
    // Triangle with |R| row sums 1.8: not walk-summable.
    std::fs::write(
        &m,
        "%%MatrixMarket matrix coordinate real general\n3 3 9\n\
         1 1 1\n1 2 0.9\n1 3 0.9\n2 1 0.9\n2 2 1\n2 3 0.9\n3 1 0.9\n3 2 0.9\n3 3 1\n",
    )
    .unwrap();
    std::fs::write(&b, "1\n1\n1\n").unwrap();
    let o = solve(&m, &b, &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("walk-summable"));
    let forced = solve(&m, &b, &["--force", "--max-iters", "50"]);
    assert!([2, 3].contains(&code(&forced)), "{}", code(&forced));
    assert!(String::from_utf8_lossy(&forced.stderr).contains("warning"));
}

#[test]
fn solver_fault_exits_three_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("a.mtx");
    let b = dir.path().join("b.rhs");
    // A diverging Jacobi iteration on a 2-node system.
    std::fs::write(
        &m,
        "%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 1\n1 2 3\n2 1 3\n2 2 1\n",
    )
    .unwrap();
    std::fs::write(&b, "1\n1\n").unwrap();
    let o = solve(&m, &b, &["--method", "jacobi", "--max-iters", "1000"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver fault"));
    assert!(!csv_rows(&o).is_empty());
}

#[test]
fn generate_then_solve_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let m = dir.path().join(format!("{tag}.mtx"));
        let o = walksolve(&[
            "generate", "--kind", "random-sparse", "--n", "300", "--seed", "42", "--out", path_str(&m),
        ]);
        assert_eq!(code(&o), 0);
        let csv = dir.path().join(format!("{tag}.csv"));
        let o = solve(&m, &m.with_extension("rhs"), &["--out", path_str(&csv)]);
        assert_eq!(code(&o), 0);
        (std::fs::read(&m).unwrap(), std::fs::read(&csv).unwrap())
    };
    assert_eq!(run("first"), run("second"));
}

#[test]
fn compare_example1_orders_the_methods() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "example1-tree", 7, 0);
    let o = walksolve(&[
        "compare", "--matrix", path_str(&m), "--rhs", path_str(&b), "--max-iters", "60",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    assert!(text.starts_with("iter,bp,jacobi,consensus\n"));
    let rows = csv_rows(&o);
    assert_eq!(rows.len(), 61);
    let v = |r: &Vec<String>, c: usize| r[c].parse::<f64>().unwrap();
    let last = &rows[60];
    assert!(v(last, 1) < -20.0);
    assert!(v(last, 1) < v(last, 2));
    assert!(v(last, 2) < v(last, 3));
}

#[test]
fn compare_diagonal_instance_is_exact_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("d.mtx");
    let b = dir.path().join("d.rhs");
    std::fs::write(&m, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2\n2 2 4\n").unwrap();
    std::fs::write(&b, "1\n2\n").unwrap();
    let o = walksolve(&["compare", "--matrix", path_str(&m), "--rhs", path_str(&b), "--max-iters", "3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv_rows(&o)[0], vec!["0", "-inf", "-inf", "-inf"]);
}

#[test]
fn compare_records_failures_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("a.mtx");
    let b = dir.path().join("b.rhs");
    std::fs::write(
        &m,
        "%%MatrixMarket matrix coordinate real general\n2 2 4\n1 1 1\n1 2 3\n2 1 3\n2 2 1\n",
    )
    .unwrap();
    std::fs::write(&b, "1\n1\n").unwrap();
    let o = walksolve(&["compare", "--matrix", path_str(&m), "--rhs", path_str(&b), "--max-iters", "400"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&o);
    assert_eq!(rows[0][1], "rejected");
    let fault = rows.iter().position(|r| r[2] == "fault").expect("jacobi diverges");
    assert!(rows[fault + 1..].iter().all(|r| r[2].is_empty()));
    assert!(!rows[400][3].is_empty());
}

#[test]
fn analyze_reports_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let (m, b) = generated(&dir, "example1-tree", 7, 1);
    let o = walksolve(&["analyze", "--matrix", path_str(&m), "--rhs", path_str(&b)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for line in ["n=7", "acyclic=true", "diameter=4", "diag_dominant=true", "walk_summable=yes"] {
        assert!(text.lines().any(|l| l == line), "missing {line} in\n{text}");
    }
}

#[test]
fn verify_passes_and_catches_the_mutation() {
    let o = walksolve(&["verify", "--count", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 6);

    let o = walksolve(&["verify", "--count", "10", "--mutate-add-back"]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL message-oracle: seed ")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("check message-oracle, seed"));
}

#[test]
fn verify_skips_guarded_checks() {
    let o = walksolve(&["verify", "--n", "20", "--count", "5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("SKIP walk-enumeration: n = 20 exceeds the enumeration guard"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&walksolve(&["solve"])), 1);
    assert_eq!(code(&walksolve(&["solve", "--matrix", "/nonexistent.mtx"])), 1);
    assert_eq!(code(&walksolve(&["bogus"])), 1);
    assert_eq!(code(&walksolve(&["solve", "--matrix", "x", "--tol", "-1"])), 1);
    assert_eq!(code(&walksolve(&["--help"])), 0);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("a.mtx");
    std::fs::write(&m, "%%MatrixMarket matrix coordinate real general\n").unwrap();
    let o = walksolve(&["analyze", "--matrix", path_str(&m)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}
