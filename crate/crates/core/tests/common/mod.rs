#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use peerdre::coefficients::PeerCoefficients;
use peerdre::dense::DenseState;
use peerdre::integrate::PeerState;
use peerdre::linops::{CsrMatrix, TimeVaryingOperator};
use peerdre::problems::DreProblem;
use peerdre::LdlPair;
use rand::{rngs::StdRng, Rng, SeedableRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Constant,
    Scaled,
    General,
}

pub fn random_sparse(n: usize, rng: &mut StdRng) -> CsrMatrix {
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, -(2.0 + rng.gen_range(0.0..2.0))));
        for off in [1usize, 3] {
            if i + off < n {
                trip.push((i, i + off, rng.gen_range(-0.6..0.6)));
                trip.push((i + off, i, rng.gen_range(-0.6..0.6)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, trip).unwrap()
}

pub fn random_psd(n: usize, k: usize, rng: &mut StdRng) -> LdlPair {
    LdlPair::from_factor(DMatrix::from_fn(n, k, |_, _| rng.gen_range(-0.5..0.5)))
}

/// Random stable problem with `m = q = 1` on `[0, steps·τ]`.
pub fn random_problem(n: usize, seed: u64, kind: Kind, tau: f64, steps: usize) -> DreProblem {
    let mut rng = StdRng::seed_from_u64(seed);
    let a0 = random_sparse(n, &mut rng);
    let a = match kind {
        Kind::Constant => TimeVaryingOperator::constant(a0).unwrap(),
        Kind::Scaled => TimeVaryingOperator::scaled(a0, 0.75, 8.0).unwrap(),
        Kind::General => {
            let a1 = random_sparse(n, &mut rng).scale(0.3);
            let provider = Arc::new(move |t: f64| a0.lin_comb(1.0, &a1, (3.0 * t).sin(), 0.0).unwrap());
            TimeVaryingOperator::general(provider, 0.0).unwrap()
        }
    };
    let b = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = random_psd(n, 2, &mut rng);
    DreProblem::new(a, b, c, x0, 0.0, tau * steps as f64, tau).unwrap()
}

/// Window of `s` random PSD stage values ending at `t_end`, as factored and dense states.
pub fn random_window(
    n: usize,
    co: &PeerCoefficients,
    t_end: f64,
    tau: f64,
    seed: u64,
) -> (PeerState, DenseState) {
    let mut rng = StdRng::seed_from_u64(seed);
    let xs: Vec<LdlPair> = (0..co.s).map(|_| random_psd(n, 2, &mut rng)).collect();
    let dense = xs.iter().map(|x| x.to_dense().unwrap()).collect();
    (
        PeerState {
            t_start: t_end - tau,
            tau,
            x: xs,
            y: None,
            factors: None,
        },
        DenseState {
            t_start: t_end - tau,
            tau,
            x: dense,
            y: None,
        },
    )
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = b.norm();
    if s > 0.0 {
        (a - b).norm() / s
    } else {
        (a - b).norm()
    }
}
