//! Simulation library for distributed global optimization of nonconvex
//! sum objectives with the annealed consensus + innovations recursion.
//!
//! Modules:
//! - [`objectives`]: test objectives, per-agent splits, admissibility checks
//! - [`topology`]: random graph Laplacians and spectral quantities
//! - [`schedules`]: decaying weight sequences
//! - [`engine`]: distributed and centralized recursions, seeded runs
//! - [`gibbs`]: Gibbs measures and their small-temperature limit
//! - [`metrics`]: consensus, success and weak-convergence diagnostics
//! - [`config`], [`record`], [`harness`]: experiment files and CLI plumbing

pub mod config;
pub mod engine;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod metrics;
pub mod objectives;
pub mod record;
pub mod schedules;
pub mod spec;
pub mod topology;

pub use error::{Error, Result};
