//! Steiner unimodular polynomials, the commuting operator tuples built from
//! them, and the numerical machinery used to measure how badly the
//! multivariable von Neumann inequality fails for homogeneous polynomials.
//!
//! The crate is organised bottom-up:
//!
//! * [`designs`] builds and verifies partial Steiner systems.
//! * [`steinerpoly`] attaches ±1 signs to a system and evaluates the result.
//! * [`normest`] estimates sup-norms on ℓ_q balls and evaluates the closed-form bounds.
//! * [`dixonop`] materialises the operator tuple as exact integer sparse matrices.
//! * [`vnratio`] runs the defect-ratio experiments and exponent fits.
//! * [`cli`] wires everything behind the `vn` binary.

pub mod cli;
pub mod designs;
pub mod dixonop;
pub mod error;
pub mod exponent;
pub mod normest;
pub mod seed;
pub mod steinerpoly;
pub mod vnratio;

pub use error::{Error, Result};
pub use exponent::Exponent;
