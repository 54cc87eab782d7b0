//! Multi-label training that obeys propositional domain rules and uses them to
//! find and self-correct noisy supervision.
//!
//! - [`rules`]: the rule DSL and crisp evaluation
//! - [`relax`]: the differentiable rule penalty
//! - [`model`]: a one-hidden-layer classifier with exact gradients
//! - [`dost`]: flagging, masking, self-correction and the training loop
//! - [`data`]: datasets, synthesis, noise injection and audits
//! - [`metrics`]: F1, constraint violation rate and correction statistics
//! - [`cli`]: the `dost` command line

#[cfg(feature = "cli")]
pub mod cli;
pub mod data;
pub mod dost;
pub mod error;
pub mod json;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod relax;
pub mod rng;
pub mod rules;

pub use error::{Error, Result};
pub use matrix::{LabelMatrix, Matrix};
