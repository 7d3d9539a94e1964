//! Echo-state reservoirs arranged as single, chained dual-pathway and spatial
//! feed-forward architectures, trained by reinforcement on a temporal two-arm
//! bandit with motor indirection.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod harness;
pub mod hpo;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod reservoir;
pub mod rng;
pub mod task;
pub mod topology;

pub mod stats;

pub use error::{Error, Result};
