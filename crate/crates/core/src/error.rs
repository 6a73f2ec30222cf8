use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level {level} out of range: {count} bound state(s)")]
    InvalidLevel { level: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("{what} failed after {iterations} iterations")]
    NumericFailure { what: String, iterations: usize },

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("no resonance peak: {0}")]
    NoResonance(String),

    #[error("tilted potential has no metastable well (slope m·a = {slope})")]
    NoMetastableWell { slope: f64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("energy {energy} has no turning points in the metastable window")]
    NoTurningPoints { energy: f64 },

    #[error("no quantized level n = {n} in the search window")]
    LevelNotFound { n: usize },

    #[error("exterior closure requires a positive slope")]
    NoSlope,

    #[error("resonance not converged: residual {residual:.3e} at E = {best}")]
    NotConverged { best: Complex64, residual: f64 },

    #[error("value {value} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

impl Error {
    pub(crate) fn numeric(what: impl Into<String>, iterations: usize) -> Self {
        Error::NumericFailure {
            what: what.into(),
            iterations,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
