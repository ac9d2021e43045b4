//! Numerical laboratory for the Poisson extension to the upper half-space
//! ℝ₊ⁿ: kernel identities, the extension operator and its dual, sharp
//! constants and extremal families, the Euler–Lagrange integral equation,
//! rearrangement monotonicity and inversion symmetry classification.

// Negated comparisons are how NaN arguments get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extension;
pub mod extremals;
pub mod fixtures;
pub mod grids;
pub mod interp;
pub mod kernel;
pub mod moebius;
pub mod quad;
pub mod rearrange;
pub mod solver;

pub use error::{Error, Result};
