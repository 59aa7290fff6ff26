use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate steady state: null space dimension {dimension}")]
    DegenerateSteadyState { dimension: usize },

    #[error("singular normal matrix (condition estimate {condition:.3e})")]
    SingularNormalMatrix { condition: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Numerical(_) => "numerical",
            Error::DegenerateSteadyState { .. } => "degenerate",
            Error::SingularNormalMatrix { .. } => "singular",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
