use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate site configuration: {0}")]
    DegenerateSites(String),

    #[error("sampler failed in block `{block}` at iteration {iteration}: {source}")]
    Sampler {
        block: &'static str,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Short machine-readable tag used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Dimension(_) => "dimension",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::DegenerateSites(_) => "degenerate_sites",
            Error::Sampler { .. } => "sampler",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
