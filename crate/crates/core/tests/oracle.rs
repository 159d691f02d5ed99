mod common;

use common::{random_problem, random_window, rel, Kind as AKind};
use peerdre::coefficients::{Kind, PeerCoefficients, BUILTIN_NAMES};
use peerdre::dense::{dense_solve, dense_step};
use peerdre::factored::LdlPair;
use peerdre::integrate::{solve, Scheme, SolverConfig, StepContext};
use peerdre::linops::FactorCache;
use peerdre::problems::scalar_tanh;

fn schemes_for(co: &PeerCoefficients) -> Vec<Scheme> {
    if co.gamma().is_some() {
        vec![Scheme::Implicit, Scheme::RosPeer, Scheme::ModRosPeer]
    } else {
        vec![Scheme::Implicit]
    }
}

#[test]
fn single_steps_match_dense() {
    let cfg = SolverConfig::default();
    for name in BUILTIN_NAMES {
        let co = PeerCoefficients::builtin(name).unwrap();
        for kind in [AKind::Constant, AKind::Scaled, AKind::General] {
            for (seed, n) in [(1u64, 6usize), (2, 12), (3, 20)] {
                let p = random_problem(n, seed, kind, 0.05, 4);
                for scheme in schemes_for(&co) {
                    let ctx = StepContext::new(&p, &co, &cfg, FactorCache::new()).unwrap();
                    let (st, dst) = random_window(n, &co, 0.1, p.tau, seed + 100);
                    let st = ctx.prepare(scheme, st).unwrap();
                    let dst = if scheme == Scheme::ModRosPeer { dst.with_aux(&co.g) } else { dst };
                    let (next, rep) = ctx.step(scheme, &st, 0).unwrap();
                    let dnext = dense_step(scheme, &dst, &co, &p).unwrap();
                    assert_eq!(rep.stage_solves(), co.s);
                    for j in 0..co.s {
                        let e = rel(&next.x[j].to_dense().unwrap(), &dnext.x[j]);
                        assert!(e <= 1e-7, "{name} {scheme:?} {kind:?} n={n} stage {j}: {e:.2e}");
                    }
                }
            }
        }
    }
}

#[test]
fn scalar_trajectories_match_dense() {
    let p = scalar_tanh(0.5, 0.05).unwrap();
    let cfg = SolverConfig {
        keep_values: true,
        ..Default::default()
    };
    for name in BUILTIN_NAMES {
        let co = PeerCoefficients::builtin(name).unwrap();
        for scheme in schemes_for(&co) {
            let traj = solve(&p, &co, scheme, &cfg).unwrap();
            let dense = dense_solve(&p, &co, scheme, 10).unwrap();
            assert_eq!(traj.values.len(), dense.len());
            for ((t, x), (td, xd)) in traj.values.iter().zip(&dense) {
                assert!((t - td).abs() < 1e-14);
                let e = rel(&x.to_dense().unwrap(), xd);
                assert!(e <= 1e-9, "{name} {scheme:?} t={t}: {e:.2e}");
            }
            let consistent = (scheme == Scheme::Implicit) == (co.kind == Kind::Implicit);
            let end = traj.endpoint().to_dense().unwrap()[(0, 0)];
            assert!(!consistent || (end - 0.5f64.tanh()).abs() < 0.05, "{name} {scheme:?}: {end}");
        }
    }
}

#[test]
fn zero_rank_start_is_handled() {
    let mut p = random_problem(10, 4, AKind::Constant, 0.05, 3);
    p.x0 = LdlPair::zero(10);
    let co = PeerCoefficients::builtin("implicit-2").unwrap();
    let traj = solve(&p, &co, Scheme::Implicit, &SolverConfig::default()).unwrap();
    assert!(traj.endpoint().k() > 0);
}
