//! Simulation, calibration and statistical verification of super-critical
//! Bellman-Harris branching processes (single-type, and two-type with one-way
//! differentiation), including the label-loss estimator of average generation
//! and Monte-Carlo-independent renewal-equation oracles for the process
//! moments.

pub mod calibration;
pub mod config;
pub mod csvio;
pub mod distributions;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
