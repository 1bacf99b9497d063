//! Numerical core for spatially periodic cooperative reaction-diffusion
//! systems on the line.
//!
//! The crate is `no_std` and only needs `alloc`. It covers periodic
//! coefficient fields, finite-difference operators, principal eigenvalues
//! of the exponentially conjugated operator `k(λ)`, spreading speeds, the
//! two-species mutation-competition ODE, a method-of-lines simulator with
//! barrier and traveling-wave tools, and the two singular-limit experiments
//! (rapid oscillation and strong coupling).
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod banded;
pub mod coeffs;
pub mod error;
pub mod homogexp;
pub mod ode;
pub mod operators;
pub mod optimize;
pub mod pde;
pub mod spectral;
pub mod speed;

pub use coeffs::{Form, MatrixField, MutationFields, Nonlinearity, PeriodicField, SystemSpec};
pub use error::{Error, Result};
pub use operators::{Bc, DiscreteOperator};
pub use spectral::{EigenMethod, EigenOptions, Eigenpair, KCurve};
pub use speed::{Crossing, CrossingKind, SpeedReport};
