//! Gradient-tracking distributed adaptive gradient method (momentum + clipped
//! adaptive stepsizes) for stochastic non-convex optimization over undirected
//! networks.
//!
//! The crate is organised by concern:
//!
//! * [`topology`]: random connected graphs, Metropolis mixing matrices and
//!   their spectral quantities.
//! * [`problems`]: Huber robust regression, softmax regression with a
//!   Geman-McClure regularizer, and heterogeneous quadratics.
//! * [`algorithms`]: the gradient-tracking adaptive method plus the DSGD,
//!   GT, momentum-DSGD and diminishing-stepsize adaptive baselines.
//! * [`metrics`]: optimality gap, consensus errors and exact/path-wise checks
//!   on recorded runs.
//! * [`theory`]: analysis constants, stepsize feasibility and the explicit
//!   optimality-gap bound.
//! * [`runner`]: config-driven multi-seed experiments with CSV/JSON output.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod runner;
pub mod theory;
pub mod topology;

pub use error::{Error, Result};
