use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{rngs::StdRng, Rng, SeedableRng};

use crate::coefficients::PeerCoefficients;
use crate::dense::DenseState;
use crate::factored::LdlPair;
use crate::integrate::PeerState;
use crate::linops::{CsrMatrix, TimeVaryingOperator};
use crate::problems::DreProblem;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn sparse_stable(n: usize, rng: &mut StdRng) -> CsrMatrix {
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, -(2.0 + rng.gen_range(0.0..2.0))));
        if i + 1 < n {
            trip.push((i, i + 1, rng.gen_range(-0.7..0.7)));
            trip.push((i + 1, i, rng.gen_range(-0.7..0.7)));
        }
    }
    CsrMatrix::from_triplets(n, n, trip).unwrap()
}

pub fn psd(n: usize, k: usize, rng: &mut StdRng) -> LdlPair {
    LdlPair::from_factor(DMatrix::from_fn(n, k, |_, _| rng.gen_range(-0.5..0.5)))
}

/// `kind`: 0 constant, 1 scaled, 2 general.
pub fn problem(n: usize, m: usize, q: usize, kind: u8, seed: u64) -> DreProblem {
    let mut r = rng(seed);
    let a0 = sparse_stable(n, &mut r);
    let a = match kind {
        0 => TimeVaryingOperator::constant(a0).unwrap(),
        1 => TimeVaryingOperator::scaled(a0, 0.75, 8.0).unwrap(),
        _ => {
            let a1 = sparse_stable(n, &mut r).scale(0.3);
            TimeVaryingOperator::general(
                Arc::new(move |t: f64| a0.lin_comb(1.0, &a1, (3.0 * t).sin(), 0.0).unwrap()),
                0.0,
            )
            .unwrap()
        }
    };
    let b = DMatrix::from_fn(n, m, |_, _| r.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(q, n, |_, _| r.gen_range(-1.0..1.0));
    let x0 = psd(n, 2, &mut r);
    DreProblem::new(a, b, c, x0, 0.0, 0.2, 0.05).unwrap()
}

pub fn window(n: usize, co: &PeerCoefficients, tau: f64, seed: u64) -> (PeerState, DenseState) {
    let mut r = rng(seed);
    let xs: Vec<LdlPair> = (0..co.s).map(|j| psd(n, 2 + j, &mut r)).collect();
    let d = xs.iter().map(|x| x.to_dense().unwrap()).collect();
    (
        PeerState {
            t_start: 0.05,
            tau,
            x: xs,
            y: None,
            factors: None,
        },
        DenseState {
            t_start: 0.05,
            tau,
            x: d,
            y: None,
        },
    )
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
