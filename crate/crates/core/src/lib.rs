//! Heat kernels of the free Hamiltonian on the (D-1)-dimensional pseudosphere
//! in horicyclic coordinates, together with the numerical machinery that
//! certifies them.

// NaN inputs are rejected with negated comparisons throughout; quadrature
// nodes are kept at full tabulated precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod gfunc;
pub mod kernels;
pub mod lattice;
mod mp;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
