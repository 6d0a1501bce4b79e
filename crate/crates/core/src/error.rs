//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid process specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quadrature did not converge to the requested tolerance (best estimate {estimate}, error {error})")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("failed to bracket the Malthus root: h E(e^{{-a L}}) stayed >= 1 up to a = {reached}")]
    BracketFailure { reached: f64 },

    #[error("defective-denominator: {0}")]
    DefectiveDenominator(String),

    #[error("observation times must be non-empty, non-negative and strictly increasing")]
    InvalidObservationTimes,

    #[error("grid step {dt} too coarse for lifetime with median {median} (need dt <= median/50)")]
    GridResolution { dt: f64, median: f64 },

    #[error("empty population: {0}")]
    EmptyPopulation(String),

    #[error("empty input sample")]
    EmptyInput,

    #[error("degenerate variance in correlation input")]
    DegenerateVariance,

    #[error("mismatched spec digests: constants computed for {expected:016x}, data carries {found:016x}")]
    SpecDigestMismatch { expected: u64, found: u64 },

    #[error("inconsistent ensemble: {0}")]
    InconsistentEnsemble(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
