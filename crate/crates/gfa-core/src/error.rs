//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum GfaError {
    /// Invalid option or configuration value; names the offending field.
    #[error("invalid options: {0}")]
    InvalidOptions(String),

    /// Input data violates a structural requirement.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Shape of an argument does not match what the operation expects.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A feature (or block) has zero variance where scaling requires it.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    /// Diagnostic trace has too few points.
    #[error("trace too short: {got} points, need at least {need}")]
    TraceTooShort { got: usize, need: usize },

    /// Operation needs at least one posterior snapshot.
    #[error("empty sample set: {0}")]
    EmptySamples(String),

    /// Every component was pruned; the noise prior or tolerance is too aggressive.
    #[error("all components pruned at sweep {sweep}")]
    AllComponentsPruned { sweep: usize },

    /// Sampler state became non-finite (numerical blow-up).
    #[error("non-finite state at sweep {sweep}: {what}")]
    NonFinite { sweep: usize, what: String },

    /// A full conditional's parameters overflowed before drawing.
    #[error("non-finite conditional parameters in {kernel}: {detail}")]
    OverflowedConditional { kernel: String, detail: String },

    /// A symmetric positive-definite solve failed even after jitter.
    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A delimited or structured file could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl GfaError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        GfaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        GfaError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Broad category used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            GfaError::InvalidOptions(_) => ErrorCategory::Config,
            GfaError::InvalidData(_)
            | GfaError::ShapeMismatch(_)
            | GfaError::ZeroVariance(_)
            | GfaError::TraceTooShort { .. }
            | GfaError::EmptySamples(_)
            | GfaError::Io { .. }
            | GfaError::Parse { .. } => ErrorCategory::Data,
            GfaError::AllComponentsPruned { .. }
            | GfaError::NonFinite { .. }
            | GfaError::OverflowedConditional { .. }
            | GfaError::Factorization(_) => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, GfaError>;
