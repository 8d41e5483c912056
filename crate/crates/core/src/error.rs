use thiserror::Error;

/// Errors surfaced by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Several configuration problems, each prefixed by its field path.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    #[error("unknown {kind} `{name}`; valid choices: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("cannot parse configuration: {0}")]
    TomlRead(#[from] toml::de::Error),

    #[error("cannot write configuration: {0}")]
    TomlWrite(#[from] toml::ser::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
