use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph is disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },

    #[error("invalid combination matrix: {0}")]
    InvalidCombination(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("signal state is cold: {available} of {required} samples generated")]
    ColdState { available: usize, required: usize },

    #[error(
        "combine called before every node adapted (node {node} has a stale intermediate estimate)"
    )]
    StaleEstimate { node: usize },

    #[error("numeric blow-up: {0}")]
    NumericBlowup(String),

    #[error("expected correlation block for node {node} is not positive-definite at iteration {iteration}")]
    NotPositiveDefinite { iteration: usize, node: usize },

    #[error("second-order moment matrix lost positive semi-definiteness at iteration {iteration} (min eigenvalue {eigenvalue:e})")]
    PsdViolation { iteration: usize, eigenvalue: f64 },

    #[error("{excluded} of {runs} runs were excluded after numeric blow-up (limit 1%)")]
    TooManyExcluded { excluded: usize, runs: usize },

    #[error("window too short: need at least {required} samples, got {available}")]
    WindowTooShort { required: usize, available: usize },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed trajectory file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericBlowup(_)
                | Error::NotPositiveDefinite { .. }
                | Error::PsdViolation { .. }
                | Error::TooManyExcluded { .. }
        )
    }
}
