//! Simulation and certification toolkit for a semi-device-independent quantum
//! random number generator built on heterodyne detection of bounded-energy
//! coherent states.
//!
//! The pipeline is:
//!
//! 1. [`acquisition`] simulates a stream of rounds: a pseudo-random input bit
//!    selects `|α⟩` or `|−α⟩`, the signal/LO phase drifts, and every round
//!    yields one heterodyne outcome in phase space.
//! 2. [`tracking`] splits the stream into chunks, estimates the centroids of
//!    the two input lobes, and assigns an output bit with the perpendicular
//!    bisector classifier.
//! 3. [`certify`] bounds the adversary's guessing probability with a pair of
//!    small semidefinite programs solved by the in-crate interior-point
//!    solver in [`sdp`], optionally with a Chernoff–Hoeffding finite-size
//!    correction.
//! 4. [`extract`] hashes the raw outcome bits with a Toeplitz matrix.

// Matrix code reads better with explicit (b, x, λ) indices.
#![allow(clippy::needless_range_loop, clippy::should_implement_trait)]

pub mod acquisition;
pub mod certify;
pub mod error;
pub mod extract;
pub mod phase_space;
pub mod probs;
pub mod rng;
pub mod sdp;
pub mod tracking;

pub use error::{Error, Result};
pub use probs::ProbTable;
