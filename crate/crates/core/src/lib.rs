//! Principal eigenvalues of semilinear Feynman–Kac operators for controlled
//! diffusions.
//!
//! The crate discretizes `max_ξ [L_ξ f + c(·, ξ) f]` (or `min_ξ` for the cost
//! minimization problem) on tensor grids with a monotone finite-difference
//! scheme, solves for the principal eigenpair by policy iteration over shifted
//! inverse power steps, and then checks the result several independent ways:
//!
//! * Collatz–Wielandt sandwiches with arbitrary positive test functions,
//! * the ground-state (Doob-transformed) chain, its stationary law and the
//!   entropy identity `ρ = Σ η (c − H)`,
//! * a linear program over discrete ergodic occupation measures on
//!   state × control × velocity,
//! * Euler–Maruyama path estimates of the risk-sensitive value, directly and
//!   through the ground-state importance sampler.

pub mod discretize;
pub mod eigensolve;
mod error;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod occupation;
pub mod simplex;
pub mod twist;

pub use error::{Error, Result};
