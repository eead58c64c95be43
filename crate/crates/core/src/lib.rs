//! Bayesian duplicate detection over a restricted space of partitions.
//!
//! Records are compared field by field, pairs that clearly refer to
//! different people are fixed as non-coreferent, and a Gibbs sampler draws
//! partitions of the remaining candidate pairs together with the comparison
//! model parameters.

pub mod baseline;
pub mod candidates;
pub mod comparison;
pub mod config;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod posterior;
pub mod record;
pub mod synthgen;
pub mod tbeta;

pub use error::{Error, Result};
