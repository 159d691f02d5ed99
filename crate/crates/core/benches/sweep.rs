use criterion::{criterion_group, criterion_main, Criterion};

use peerdre::coefficients::PeerCoefficients;
use peerdre::harness::{par_map, seq_map};
use peerdre::integrate::{solve, Scheme, SolverConfig};
use peerdre::problems::ltv_benchmark;

// Four step sizes of one convergence sweep, each a full trajectory.
fn sweep(c: &mut Criterion) {
    let base = ltv_benchmark(4, 0.02).unwrap().with_horizon(0.2).unwrap();
    let coeffs = PeerCoefficients::builtin("implicit-2").unwrap();
    let cfg = SolverConfig::default();
    let taus = [0.02, 0.01, 0.005, 0.0025];
    let run = |&tau: &f64| {
        let p = base.with_tau(tau).unwrap();
        solve(&p, &coeffs, Scheme::Implicit, &cfg).unwrap().max_rank()
    };

    let mut g = c.benchmark_group("convergence_sweep_ltv4");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| seq_map(&taus, run)));
    g.bench_function("rayon", |b| b.iter(|| par_map(&taus, run)));
    g.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
