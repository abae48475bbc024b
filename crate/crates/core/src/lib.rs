//! Numerical laboratory for ideal two-dimensional flow around lattices of
//! small obstacles.
//!
//! The crate builds perforated domains, evaluates explicit Biot-Savart
//! laws (full plane, exterior of one obstacle, glued corrector), measures
//! the corrector error terms, solves the exterior problem by the method of
//! fundamental solutions, and transports vorticity with a blob method.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod biotsavart;
pub mod cli;
pub mod config;
pub mod conformal;
pub mod corrector;
pub mod error;
pub mod exterior_solver;
pub mod field;
pub mod geometry;
pub mod output;
pub mod quadrature;
pub mod transport;
pub mod treecode;

/// Points and vectors of the plane are complex numbers `x + i y`.
pub type Point = num_complex::Complex64;

pub use error::{Error, Result};

/// Version string echoed in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
