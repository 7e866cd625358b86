//! Simulation of a two-sided share exchange whose investors mix market
//! trend-following with a published fundamental signal, under several
//! common-knowledge (accounting) regimes.

pub mod engine;
pub mod error;
pub mod regimes;
pub mod report;
pub mod rng;
pub mod metrics;
pub mod simulation;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
