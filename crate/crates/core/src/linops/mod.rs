//! Sparse operators, time-dependent evaluation and shifted solves with low-rank updates.

pub mod banded;
pub mod mtx;
pub mod operator;
pub mod shifted;
pub mod sparse;

pub use operator::{MatrixProvider, OperatorMode, TimeVaryingOperator};
pub use shifted::{FactorCache, ShiftedOperator, SparseHandle};
pub use sparse::{spmv_t, CsrMatrix};
