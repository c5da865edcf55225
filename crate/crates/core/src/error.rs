use std::io;

use thiserror::Error;

/// Errors produced by the channel-prediction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("covariance not repairable to positive definite (smallest eigenvalue {min_eigenvalue:.6e}, max jitter {max_jitter:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_jitter: f64 },

    #[error("component {component} collapsed and could not be re-seeded")]
    ComponentCollapse { component: usize },

    #[error("noise variance mismatch: bank built for {bank}, observation has {observation}")]
    NoiseVarianceMismatch { bank: f64, observation: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// True for failures of the numerical kernels rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::ComponentCollapse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
