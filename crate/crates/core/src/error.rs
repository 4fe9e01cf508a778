use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: usize },

    #[error("non-finite cost at iteration {iteration}")]
    NonFiniteCost { iteration: usize },

    #[error("input matrix is all zeros")]
    AllZeroInput,

    #[error("signal is empty")]
    EmptySignal,

    #[error("signal is silent: {0}")]
    SilentSignal(String),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("corpus layout error at {path}: {reason}")]
    Corpus { path: PathBuf, reason: String },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::NonFiniteCost { .. } => "non_finite_cost",
            Error::AllZeroInput => "all_zero_input",
            Error::EmptySignal => "empty_signal",
            Error::SilentSignal(_) => "silent_signal",
            Error::SampleRateMismatch(..) => "sample_rate_mismatch",
            Error::Corpus { .. } => "corpus_layout",
            Error::ModelFormat(_) => "model_format",
            Error::Wav(_) => "wav",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
