use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user configuration or non-integral lattice geometry.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad input outside the admissible range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent internal data (missing nodes, mismatched domains, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A plugin density broke its declared contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical check contradicted a property that must hold.
    #[error("falsification: {0}")]
    Falsification(String),

    /// The minimizer met a non-finite energy; `state` holds the last iterate in text form.
    #[error("non-finite energy at iteration {iteration}")]
    NonFinite { iteration: usize, state: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Structural(_) => "structural",
            Error::Contract(_) => "contract",
            Error::Falsification(_) => "falsification",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
