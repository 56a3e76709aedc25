use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diameter infinite: the kernel is not communicating")]
    DiameterInfinite,

    #[error("iteration cap of {cap} reached (last span {last_span:e})")]
    IterationCap { cap: usize, last_span: f64 },

    #[error("step {t}: action {action} is not available in state {state}")]
    InvalidAction { t: usize, state: usize, action: usize },

    #[error("step {t} is past the horizon {horizon}")]
    PastHorizon { t: usize, horizon: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Replay(String),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DiameterInfinite => "diameter_infinite",
            Error::IterationCap { .. } => "iteration_cap",
            Error::InvalidAction { .. } => "invalid_action",
            Error::PastHorizon { .. } => "past_horizon",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Replay(_) => "replay_mismatch",
            Error::Audit(_) => "audit_failed",
            Error::Parse(_) => "parse_error",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "csv_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
