use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("plant and modal model share a characteristic root (Sylvester operator determinant {det:e})")]
    SharedSpectrum { det: f64 },

    #[error("transformation matrix M is singular (det = {det:e}); controllability or observability is lost")]
    SingularTransform { det: f64 },

    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error("simulation diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("empty or too short analysis window: {0}")]
    EmptyWindow(String),

    #[error("no sub-interval with nonzero scalar regressor was found")]
    NoQualifyingInterval,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
