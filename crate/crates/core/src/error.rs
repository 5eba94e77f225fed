//! Crate-level error type.
//!
//! Each module owns a narrow error enum; [`Error`] wraps them so pipeline
//! code can use `?` across stages and the CLI can map failures to exit codes.

use thiserror::Error;

use crate::{
    combine::CombineError, config::ConfigError, evaluate::EvaluateError, ga::GaError,
    markov::MarkovError, phase_space::PhaseSpaceError, series::DataError, svm::SvmError,
    wavelet::WaveletError,
};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("phase space: {0}")]
    PhaseSpace(#[from] PhaseSpaceError),
    #[error("wavelet: {0}")]
    Wavelet(#[from] WaveletError),
    #[error("svm: {0}")]
    Svm(#[from] SvmError),
    #[error("tuning: {0}")]
    Ga(#[from] GaError),
    #[error("markov: {0}")]
    Markov(#[from] MarkovError),
    #[error("combine: {0}")]
    Combine(#[from] CombineError),
    #[error("evaluate: {0}")]
    Evaluate(#[from] EvaluateError),
    /// A pipeline stage failed; `stage` names where.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Data(_) | Error::Io { .. } => ErrorCategory::Data,
            Error::Stage { source, .. } => source.category(),
            Error::PhaseSpace(e) if e.is_data_error() => ErrorCategory::Data,
            Error::Wavelet(e) if e.is_data_error() => ErrorCategory::Data,
            Error::Markov(e) if e.is_data_error() => ErrorCategory::Data,
            Error::Combine(e) if e.is_data_error() => ErrorCategory::Data,
            Error::Evaluate(e) if e.is_data_error() => ErrorCategory::Data,
            _ => ErrorCategory::Numeric,
        }
    }
}
