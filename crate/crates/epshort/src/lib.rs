//! Symbol detection for inter-symbol-interference channels: expectation
//! propagation in a channel-shortened signal space with a reduced-memory
//! BCJR estimator, plus LMMSE, classical channel-shortening, and
//! full-BCJR baselines, and a reproducible Monte-Carlo sweep harness.

pub mod cli;
pub mod config;
pub mod ep;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod modulation;
pub mod rng;
pub mod shorten;
pub mod sweep;
pub mod trellis;

pub use error::{Error, Result};
