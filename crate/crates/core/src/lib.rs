//! Spectral laboratory for the semiclassical dispersive equation
//! `i ε² ∂ₜu = λ(εD)u + ε²V u` on periodic grids.
//!
//! The crate is organised bottom-up: [`grid`] holds the periodic box and
//! its discrete Fourier analysis, [`symbols`] the closed-form dispersion
//! relations and potentials, [`initial_data`] the ε-indexed data families,
//! [`propagator`] the time stepping, [`wigner`] the phase-space pairings,
//! [`predictions`] the limit formulas, [`smoothing`] the local smoothing
//! probe and [`experiment`] the declarative runner used by the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cutoff;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod grid;
pub mod initial_data;
pub mod par;
pub mod predictions;
pub mod propagator;
pub mod smoothing;
pub mod symbols;
pub mod wigner;

pub use error::{Error, Result};
pub use grid::{Field, FreqField, Grid};

/// Complex scalar used for every field value.
pub type C64 = num_complex::Complex64;
