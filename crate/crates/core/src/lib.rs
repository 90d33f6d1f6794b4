//! Simulation and stability analysis for regime-switching jump diffusions
//! with state-dependent switching.
//!
//! * [`model`]: model definitions, q-property checks, linearization, built-ins.
//! * [`switching`]: single-chain and coupled regime transitions.
//! * [`engine`]: Euler–Maruyama paths with exact jump clocks, ensembles,
//!   coupled pairs and pathwise sensitivities.
//! * [`generator`]: the generator of the process, its coupled counterpart and
//!   Lyapunov-condition scans.
//! * [`stability`]: stationary distributions, linearized criteria, Monte Carlo
//!   exponent estimators and distribution-stability diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod exec;
pub mod generator;
pub mod model;
pub mod rng;
pub mod stability;
pub mod switching;

pub use error::{Error, Result};
