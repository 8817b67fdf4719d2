use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("variance undefined for {count} observation(s)")]
    VarianceUndefined { count: u64 },

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("diagnostic undefined: {0}")]
    UndefinedDiagnostic(String),

    #[error("score {score} is not supported by model {model}")]
    UnsupportedScore { score: String, model: String },

    #[error("adaptation failed: {reason}")]
    AdaptationFailed {
        reason: String,
        /// Position of the first chain when adaptation was abandoned.
        last_position: Vec<f64>,
    },

    #[error("row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
