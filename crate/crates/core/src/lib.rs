//! Implicit finite-volume solvers for reaction-diffusion equations whose
//! diffusion `phi` may degenerate (`phi'(0) = 0`) or blow up at the ends of a
//! bounded interval, plus a numerical verification harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod coupled_solver;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod nonlinearity;
pub mod quadrature;
pub mod reactions;
pub mod scalar_solver;
pub mod verify;

pub use error::{Error, Result};
