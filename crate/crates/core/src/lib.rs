//! Preference-based ranking of speech synthesis systems: synthetic listening
//! tests, comparison-pair generation, preference aggregation, and a
//! same-listener preference score model.

pub mod aggregate;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pairgen;
pub mod preference;
pub mod rng;
pub mod simulate;
pub mod trainer;

pub use error::{Error, Result};
