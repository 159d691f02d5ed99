//! Low-rank integrators for large-scale differential Riccati equations
//!
//! `Ẋ = AᵀX + XA − XBBᵀX + CᵀC`
//!
//! Every iterate is held as a symmetric indefinite pair `L D Lᵀ`. Implicit peer steps
//! reduce to one algebraic Riccati equation per stage, solved by Newton–Kleinman; the
//! Rosenbrock-type peer steps (standard and auxiliary-variable form) reduce to one
//! Lyapunov equation per stage. All Lyapunov solves go through a low-rank ADI kernel
//! built on banded sparse factorizations with a Woodbury correction for the feedback term.

pub mod coefficients;
pub mod dense;
pub mod error;
pub mod factored;
pub mod harness;
pub mod implicit;
pub mod integrate;
pub mod linops;
pub mod lyap;
pub mod newton;
pub mod problems;
pub mod rosenbrock;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use factored::{column_compress, ldl_concat, ldl_diff_norm, ldl_frob_norm, ldl_rel_diff, LdlBuilder, LdlPair};
