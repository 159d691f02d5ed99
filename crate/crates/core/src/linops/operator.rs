use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::shifted::SparseHandle;
use super::sparse::CsrMatrix;
use crate::error::Result;

/// Provider for the general (non-scaled) time dependence.
pub type MatrixProvider = Arc<dyn Fn(f64) -> CsrMatrix + Send + Sync>;

#[derive(Clone)]
pub enum OperatorMode {
    Constant,
    /// `A(t) = μ(t)·A₀` with `μ(t) = amplitude·sin(frequency·π·t) + 1`.
    Scaled { amplitude: f64, frequency: f64 },
    General(MatrixProvider),
}

impl fmt::Debug for OperatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorMode::Constant => write!(f, "Constant"),
            OperatorMode::Scaled {
                amplitude,
                frequency,
            } => write!(f, "Scaled {{ amplitude: {amplitude}, frequency: {frequency} }}"),
            OperatorMode::General(_) => write!(f, "General(..)"),
        }
    }
}

/// `A(t)`. In the constant and scaled modes every evaluation shares one sparse base.
#[derive(Clone, Debug)]
pub struct TimeVaryingOperator {
    base: SparseHandle,
    mode: OperatorMode,
}

impl TimeVaryingOperator {
    pub fn constant(a0: CsrMatrix) -> Result<Self> {
        Ok(TimeVaryingOperator {
            base: SparseHandle::new(a0)?,
            mode: OperatorMode::Constant,
        })
    }

    pub fn scaled(a0: CsrMatrix, amplitude: f64, frequency: f64) -> Result<Self> {
        Ok(TimeVaryingOperator {
            base: SparseHandle::new(a0)?,
            mode: OperatorMode::Scaled {
                amplitude,
                frequency,
            },
        })
    }

    /// `a_at(t0)` seeds the sparsity ordering; evaluations call `a_at` each time.
    pub fn general(a_at: MatrixProvider, t0: f64) -> Result<Self> {
        Ok(TimeVaryingOperator {
            base: SparseHandle::new(a_at(t0))?,
            mode: OperatorMode::General(a_at),
        })
    }

    /// Same base matrix, constant mode.
    pub fn frozen(&self) -> Self {
        TimeVaryingOperator {
            base: self.base.clone(),
            mode: OperatorMode::Constant,
        }
    }

    pub fn mode(&self) -> &OperatorMode {
        &self.mode
    }

    pub fn base(&self) -> &CsrMatrix {
        self.base.matrix()
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn is_autonomous(&self) -> bool {
        matches!(self.mode, OperatorMode::Constant)
    }

    /// `μ(t)` (1 outside the scaled mode).
    pub fn mu(&self, t: f64) -> f64 {
        match self.mode {
            OperatorMode::Scaled {
                amplitude,
                frequency,
            } => amplitude * (frequency * std::f64::consts::PI * t).sin() + 1.0,
            _ => 1.0,
        }
    }

    /// `A(t) = scale·M` with `M` cached when possible.
    pub fn eval_scaled(&self, t: f64) -> Result<(SparseHandle, f64)> {
        match &self.mode {
            OperatorMode::Constant => Ok((self.base.clone(), 1.0)),
            OperatorMode::Scaled { .. } => Ok((self.base.clone(), self.mu(t))),
            OperatorMode::General(f) => Ok((SparseHandle::new(f(t))?, 1.0)),
        }
    }

    /// Materialized `A(t)`.
    pub fn eval(&self, t: f64) -> CsrMatrix {
        match &self.mode {
            OperatorMode::Constant => self.base.matrix().clone(),
            OperatorMode::Scaled { .. } => self.base.matrix().scale(self.mu(t)),
            OperatorMode::General(f) => f(t),
        }
    }

    /// `A(t)ᵀ·x`.
    pub fn apply_t(&self, t: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.mode {
            OperatorMode::General(f) => f(t).tr_mul_dense(x),
            _ => Ok(self.base.matrix().tr_mul_dense(x)? * self.mu(t)),
        }
    }

    /// `(α·(A(t₁) − A(t₂)) + δ·I)ᵀ·x`, assembled sparsely in the general mode.
    pub fn diff_apply_t(
        &self,
        t1: f64,
        t2: f64,
        alpha: f64,
        delta: f64,
        x: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        match &self.mode {
            OperatorMode::General(f) => {
                let a = f(t1).lin_comb(alpha, &f(t2), -alpha, delta)?;
                a.tr_mul_dense(x)
            }
            _ => {
                let s = alpha * (self.mu(t1) - self.mu(t2));
                let mut y = x * delta;
                if s != 0.0 {
                    y += self.base.matrix().tr_mul_dense(x)? * s;
                }
                Ok(y)
            }
        }
    }

    /// Upper bound for `max_t ‖A(t)‖` over `[t0, tf]` from row sums.
    pub fn norm_bound(&self, t0: f64, tf: f64) -> f64 {
        match &self.mode {
            OperatorMode::Constant => self.base.matrix().gershgorin_radius(),
            OperatorMode::Scaled { amplitude, .. } => {
                self.base.matrix().gershgorin_radius() * (1.0 + amplitude.abs())
            }
            OperatorMode::General(f) => {
                let m = 64;
                (0..=m)
                    .map(|i| f(t0 + (tf - t0) * i as f64 / m as f64).gershgorin_radius())
                    .fold(0.0, f64::max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a0() -> CsrMatrix {
        CsrMatrix::from_triplets(2, 2, vec![(0, 0, -2.0), (0, 1, 1.0), (1, 1, -3.0)]).unwrap()
    }

    #[test]
    fn scaled_mode_values() {
        let op = TimeVaryingOperator::scaled(a0(), 0.75, 8.0).unwrap();
        assert_eq!(op.eval(0.0), a0());
        assert!((op.mu(1.0 / 16.0) - 1.75).abs() < 1e-15);
        assert!((op.mu(3.0 / 16.0) - 0.25).abs() < 1e-15);
        let e = op.eval(1.0 / 16.0).to_dense() - a0().to_dense() * 1.75;
        assert!(e.norm() < 1e-14);
        assert!(!op.is_autonomous());
    }

    #[test]
    fn constant_mode_is_time_independent() {
        let op = TimeVaryingOperator::constant(a0()).unwrap();
        assert!(op.is_autonomous());
        assert_eq!(op.eval(0.3), op.eval(17.0));
        let (h1, s1) = op.eval_scaled(0.1).unwrap();
        let (h2, s2) = op.eval_scaled(0.9).unwrap();
        assert_eq!((h1.id(), s1), (h2.id(), s2));
    }

    #[test]
    fn diff_apply_matches_sparse_assembly() {
        let f: MatrixProvider = Arc::new(|t| a0().scale(1.0 + t * t));
        let gen = TimeVaryingOperator::general(f, 0.0).unwrap();
        let sc = TimeVaryingOperator::scaled(a0(), 0.75, 8.0).unwrap();
        let x = DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 - 1.0);
        for op in [gen, sc] {
            let got = op.diff_apply_t(0.3, 0.1, 0.5, 2.0, &x).unwrap();
            let a = (op.eval(0.3).to_dense() - op.eval(0.1).to_dense()) * 0.5
                + DMatrix::identity(2, 2) * 2.0;
            assert!((got - a.transpose() * &x).norm() < 1e-13);
        }
    }
}
