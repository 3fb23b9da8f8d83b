use serde::Serialize;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    BadRow { row: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    NotFound(String),
    #[error(transparent)]
    Core(#[from] sparseload::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingColumn(_) | CliError::BadRow { .. } | CliError::Csv(_) => "SchemaError",
            CliError::Config(_) => "ConfigError",
            CliError::NotFound(_) => "NotFound",
            CliError::Core(_) => "ComputationError",
            CliError::Io(_) => "IoError",
            CliError::Json(_) => "JsonError",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            row: match self {
                CliError::BadRow { row, .. } => Some(*row),
                _ => None,
            },
            column: match self {
                CliError::MissingColumn(c) => Some(c.clone()),
                _ => None,
            },
        }
    }
}

/// Machine-readable failure description written when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}
