//! Simulation of topology-driven privacy leakage in decentralized federated
//! learning: random graphs, colluding adversaries, average consensus,
//! information-theoretic leakage and concrete attacks.

pub mod adversary;
pub mod attack;
pub mod consensus;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod privacy;
pub mod seed;

pub use error::{Error, Result};
