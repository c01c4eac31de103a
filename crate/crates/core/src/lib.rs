//! Inactivity detection and segmentation from wearable orientation data.
//!
//! Orientations are embedded into a solid shell via the ADR map, a Bayesian
//! online changepoint detector tracks the posterior over run lengths, and the
//! resulting run-length trace is cut into segments at its resets.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bocpd;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod logspace;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod simharness;
pub mod synthgen;

pub use error::{KidsError, Result};
