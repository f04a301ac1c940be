use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curvature profile: {0}")]
    InvalidProfile(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("model is parabolic for p = {p}: the Green kernel diverges")]
    Parabolic { p: f64 },

    #[error("parabolicity undecidable from the tabulated tail: {0}")]
    Indeterminate(String),

    #[error("invalid metric on cell {cell}: {reason}")]
    InvalidMetric { cell: usize, reason: String },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("exhaustion sequence not monotone: {0}")]
    NotMonotone(String),

    #[error("no limit along the p-schedule: {0}")]
    NoLimit(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a mathematical precondition (as opposed to I/O or configuration).
    pub fn is_mathematical(&self) -> bool {
        !matches!(self, Error::Parse { .. } | Error::Config(_) | Error::Io(_) | Error::Json(_))
    }
}
