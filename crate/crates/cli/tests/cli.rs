use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peer-dre"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn scalar_solve_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "solve", "--problem", "tanh", "--coeffs", "implicit-1", "--tau", "0.1", "--steps", "7", "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&dir.path().join("stages.csv"));
    assert_eq!(
        rows[0],
        ["step", "time", "stage", "rank", "newton_iters", "adi_iters", "residual"]
    );
    assert_eq!(rows.len(), 1 + 7);
    assert!(rows[1..].iter().all(|r| r[2] == "1"));
}

#[test]
fn invalid_coefficient_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.coeffs");
    std::fs::write(&bad, "kind = implicit\ns = 2\nc = 0.5 oops\n").unwrap();
    let o = run(&["solve", "--problem", "tanh", "--coeffs", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn unknown_problem_and_flags_exit_2() {
    assert_eq!(run(&["solve", "--problem", "nowhere/at/all"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--problem", "tanh", "--tau", "0.3"]).status.code(), Some(2));
}

#[test]
fn fdm_run_ranks_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "solve", "--problem", "fdm:5", "--coeffs", "implicit-2", "--tau", "0.01", "--steps", "10",
        "--dump-endpoint", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&dir.path().join("stages.csv"));
    assert_eq!(rows.len(), 1 + 9 * 2);
    for r in &rows[1..] {
        assert!(r[3].parse::<usize>().unwrap() <= 25);
    }
    assert!(dir.path().join("X_L.mtx").is_file());
    assert!(dir.path().join("X_D.mtx").is_file());
}

#[test]
fn solve_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&[
            "solve", "--problem", "ltv:4", "--coeffs", "rosenbrock-1", "--tau", "0.01", "--steps", "5",
            "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(
        std::fs::read(a.path().join("stages.csv")).unwrap(),
        std::fs::read(b.path().join("stages.csv")).unwrap()
    );
}

#[test]
fn compare_order_one_methods() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare", "--problem", "fdm:4", "--scheme", "implicit-1,ros-peer-1,mod-ros-peer-1", "--tau", "0.01",
        "--steps", "20", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&dir.path().join("compare.csv"));
    assert_eq!(rows[0], ["method", "time", "rel_frob_err"]);
    assert_eq!(rows.len(), 1 + 3);
    let err: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!((err[1] - err[2]).abs() <= 1e-9 * err[1]);
}

#[test]
fn compare_without_methods_is_usage_error() {
    assert_eq!(run(&["compare", "--problem", "tanh", "--tau", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["compare", "--problem", "tanh", "--tau", "0.1", "--scheme", ""]).status.code(), Some(2));
}

#[test]
fn convergence_on_scalar_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "convergence", "--problem", "tanh", "--coeffs", "implicit-1", "--tau", "1/10,1/20,1/40,1/80",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&dir.path().join("convergence.csv"));
    assert_eq!(rows[0], ["tau", "steps", "rel_frob_err_endpoint", "wall_time", "max_rank"]);
    assert_eq!(rows.len(), 5);
    assert!(rows[1][0].contains('e'));
    let order: f64 = std::fs::read_to_string(dir.path().join("order.txt")).unwrap().trim().parse().unwrap();
    assert!((order - 1.0).abs() < 0.3, "{order}");
}
