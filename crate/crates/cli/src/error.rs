use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("config field '{field}': {message}")]
    Field { field: String, message: String },

    #[error("config field '{field}' has dimension {got}, expected {expected}")]
    DimensionMismatch { field: String, expected: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(#[from] optrack_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub(crate) fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::Field { field: field.to_string(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 4 when the linearizing
    /// assumption fails, 3 for every other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Field { .. } | CliError::DimensionMismatch { .. } => 2,
            CliError::Solver(optrack_core::Error::NotLinearizable(_)) => 4,
            CliError::Solver(_) | CliError::Io { .. } => 3,
        }
    }

    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Field { .. } => "invalid_field",
            CliError::DimensionMismatch { .. } => "dimension_mismatch",
            CliError::Io { .. } => "io_error",
            CliError::Solver(e) => e.code(),
        }
    }
}
