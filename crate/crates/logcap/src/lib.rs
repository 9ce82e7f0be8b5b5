//! Logarithmic capacity of compact planar sets with many small components.
//!
//! The capacity is computed with the charge simulation method using a single
//! charge point per component: the Green function of the complement is
//! approximated by `h(z) = c + sum_j p_j log|z - w_j|`, the collocation system
//! is averaged over each boundary circle, and the capacity estimate is
//! `exp(-c)`. The crate covers the full pipeline for generalized Cantor sets
//! and Cantor dust:
//!
//! - [`geometry`] builds the charge configurations and performs the
//!   centrosymmetric reduction to a half-size system,
//! - [`fastsum`] evaluates mutual log-kernel potentials directly or with an
//!   adaptive treecode,
//! - [`operator`] exposes the collocation matrices densely (for oracles) and
//!   matrix-free,
//! - [`precond`] builds the block-diagonal preconditioner,
//! - [`krylov`] provides matrix-free GMRES (and MINRES),
//! - [`capacity`] runs the end-to-end pipeline, analytic references, and the
//!   a-posteriori error bound,
//! - [`extrapolate`] fits the geometric decay of level differences and
//!   extrapolates to the fractal limit.

pub mod capacity;
pub mod error;
pub mod extrapolate;
pub mod fastsum;
pub mod geometry;
pub mod krylov;
pub mod operator;
pub mod precond;

pub use error::{Error, Result};
