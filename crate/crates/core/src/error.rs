use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: String, step: usize },

    #[error("path variable {theta} outside [{min}, {max}]")]
    OutOfRange { theta: f64, min: f64, max: f64 },

    #[error("degenerate geometry: vessels {0:.3e} m apart")]
    DegenerateGeometry(f64),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("no exponential decay window found in log")]
    InsufficientDecay,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown parameter path `{0}`")]
    UnknownParameter(String),

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        msg: String,
        line: usize,
        column: usize,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            msg: e.to_string(),
            line: e.line(),
            column: e.column(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
