//! Gaussian Wigner-function propagators for quantum Brownian motion.
//!
//! A set of N oscillators couples linearly to a thermal bath of harmonic
//! oscillators. Everything is Gaussian, so the reduced dynamics is carried by
//! two matrices: the classical transition matrix `R(t)` and the diffusion
//! matrix `S(t)`, with `V_t = R V_0 R^T + S`. On top of these the crate builds
//! generalized uncertainty bounds, PPT entanglement witnesses and a
//! discrete-bath reference solver.
//!
//! Units: hbar = k_B = 1. Phase-space vectors are interleaved as
//! `(X_1, P_1, ..., X_N, P_N)`.

pub mod case_model;
pub mod error;
pub mod model;
pub mod oracle;
pub mod phase_space;
pub mod propagator;
pub mod quadrature;
pub mod uncertainty;

pub use error::{Error, Result};
