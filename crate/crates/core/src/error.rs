use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the factored arithmetic, the inner solvers and the integrators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dense conversion refused: n = {n} exceeds the cap of {cap}")]
    DenseCap { n: usize, cap: usize },

    #[error("shifted system is singular at shift {shift}")]
    SingularShift { shift: Complex64 },

    #[error("capacitance system of the low-rank update is singular at shift {shift}")]
    SingularUpdate { shift: Complex64 },

    #[error("non-finite values encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("unknown builtin coefficient set `{0}`")]
    UnknownBuiltin(String),

    #[error("parse error in {context} at line {line}: {msg}")]
    Parse {
        context: String,
        line: usize,
        msg: String,
    },

    #[error("singular Lyapunov operator")]
    SingularLyapunov,

    #[error("Newton iteration diverged: residual grew for 3 consecutive steps (last {residual:.3e})")]
    NewtonDiverged { residual: f64 },

    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    NewtonStalled { iterations: usize, residual: f64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference check failed: halving the step changed the endpoint by {change:.3e} (limit {limit:.1e})")]
    Richardson { change: f64, limit: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
