//! Non-local convolution energies for anisotropic Griffith fracture.
//!
//! The crate evaluates the energies
//! `F_ε(u, A) = (1/ε) ∫_A f(ε ∫_A W(Eu(y)) ρ_ε(x − y) dy) dx`
//! on Cartesian grids, their limit `α ∫ W(Eu) + β ∫_{J_u} φ_ρ(ν)` on
//! piecewise-smooth fields, and the constructions used to compare the two.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod energy;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod kernels;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
