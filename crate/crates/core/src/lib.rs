//! Finite-N simulations of emergent superselection for macroscopic bodies.
//!
//! States are kept in branch form, a short list of amplitudes times
//! product states, so every quantity is polynomial in the site count and
//! sweeps can reach N ~ 10^6. The crate is organised as:
//!
//! * [`branch`]: product-state superpositions, overlaps, partial traces and
//!   decoherence metrics.
//! * [`operator`]: normal-ordered polynomials in canonical pairs, their text
//!   syntax, commutators with the center-of-mass operator, and truncated
//!   oscillator realizations.
//! * [`overlap`]: orthogonalization of macroscopically distinct product states.
//! * [`measurement`]: premeasurement, environment and infrared decoherence,
//!   local splitters and cat lifetimes.
//! * [`series`]: scaling series and log-slope fits shared by all experiments.
//! * [`cli`]: configuration parsing and the CSV experiment runner.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod cli;
pub mod error;
pub mod measurement;
pub mod operator;
pub mod overlap;
pub mod series;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
