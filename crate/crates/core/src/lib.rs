//! Numerical toolkit for the conformal σ_k equation: symmetric functions,
//! gauge conversions, radial reductions, barrier and geometric diagnostics,
//! and radial/scalar solvers.

// `!(x > 0.0)` guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod conformal;
pub mod error;
pub mod quad;
pub mod radial;
pub mod solver;
pub mod symfunc;
pub mod verify;

pub use error::{Error, Result};
pub use symfunc::{ConeParams, EigenTuple, SymMatrix};
