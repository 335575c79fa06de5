//! Digital-twin-assisted adaptive federated learning simulator.
//!
//! Devices train a small classifier on local shards; cluster curators pick
//! the number of local updates per aggregation with a DQN, weight uploads by
//! subjective-logic reputation, and a time-weighted merge combines clusters
//! asynchronously under an energy budget.

pub mod budget;
pub mod config;
pub mod dataset;
pub mod dqn;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod kmeans;
pub mod mlp;
pub mod rng;
pub mod scenario;
pub mod selftest;
pub mod trainer;
pub mod trust;

pub use error::{Error, Result};
