mod common;

use common::{random_problem, rel, Kind as PKind};
use peerdre::coefficients::{PeerCoefficients, BUILTIN_NAMES};
use peerdre::dense::dense_solve;
use peerdre::integrate::{solve, Scheme, SolverConfig};
use peerdre::ldl_rel_diff;
use peerdre::problems::ltv_benchmark;

fn constant_diagonal_sets() -> Vec<PeerCoefficients> {
    BUILTIN_NAMES
        .iter()
        .map(|n| PeerCoefficients::builtin(n).unwrap())
        .filter(|c| c.gamma().is_some())
        .collect()
}

#[test]
fn dense_standard_and_auxiliary_forms_agree() {
    for co in constant_diagonal_sets() {
        for kind in [PKind::Constant, PKind::Scaled, PKind::General] {
            let p = random_problem(8, 5, kind, 0.02, 12);
            let a = dense_solve(&p, &co, Scheme::RosPeer, 10).unwrap();
            let b = dense_solve(&p, &co, Scheme::ModRosPeer, 10).unwrap();
            assert_eq!(a.len(), b.len());
            for ((t, x), (_, y)) in a.iter().zip(&b) {
                assert!(rel(y, x) <= 1e-10, "s={} {kind:?} t={t}", co.s);
            }
        }
    }
}

#[test]
fn low_rank_standard_and_auxiliary_forms_agree() {
    let p = ltv_benchmark(5, 0.01).unwrap().with_horizon(0.2).unwrap();
    let cfg = SolverConfig {
        keep_values: true,
        ..Default::default()
    };
    for co in constant_diagonal_sets() {
        let a = solve(&p, &co, Scheme::RosPeer, &cfg).unwrap();
        let b = solve(&p, &co, Scheme::ModRosPeer, &cfg).unwrap();
        for ((t, x), (_, y)) in a.values.iter().zip(&b.values) {
            assert!(ldl_rel_diff(x, y).unwrap() <= 1e-7, "s={} t={t}", co.s);
        }
    }
}

#[test]
fn autonomous_layouts_track_general_layouts() {
    let p = random_problem(12, 9, PKind::Constant, 0.02, 10);
    for co in BUILTIN_NAMES.iter().map(|n| PeerCoefficients::builtin(n).unwrap()) {
        let mut schemes = vec![Scheme::Implicit];
        if co.gamma().is_some() {
            schemes.extend([Scheme::RosPeer, Scheme::ModRosPeer]);
        }
        for scheme in schemes {
            let run = |general| {
                let cfg = SolverConfig {
                    force_general_layout: general,
                    keep_values: true,
                    ..Default::default()
                };
                solve(&p, &co, scheme, &cfg).unwrap()
            };
            let (a, b) = (run(false), run(true));
            for ((t, x), (_, y)) in a.values.iter().zip(&b.values) {
                assert!(ldl_rel_diff(x, y).unwrap() <= 1e-8, "{scheme:?} s={} t={t}", co.s);
            }
        }
    }
}

#[test]
fn trajectory_tracks_dense_oracle_on_benchmark() {
    // n0 = 5, τ = 1e-2, 50 steps
    let p = ltv_benchmark(5, 0.01).unwrap();
    let cfg = SolverConfig {
        keep_values: true,
        ..Default::default()
    };
    for (name, scheme) in [("implicit-2", Scheme::Implicit), ("rosenbrock-1", Scheme::RosPeer)] {
        let co = PeerCoefficients::builtin(name).unwrap();
        let lr = solve(&p, &co, scheme, &cfg).unwrap();
        let dn = dense_solve(&p, &co, scheme, 10).unwrap();
        assert_eq!(lr.values.len(), dn.len());
        let worst = lr
            .values
            .iter()
            .zip(&dn)
            .map(|((_, x), (_, d))| rel(&x.to_dense().unwrap(), d))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{name}: {worst:.2e}");
    }
}
