use std::path::Path;

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Exit code 3.
    #[error("{0}")]
    Degenerate(String),
    /// Exit code 4.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::io(path, e)
        } else {
            CliError::Validation(format!("{}: {e}", path.display()))
        }
    }

    pub fn from_core(e: mistr_core::Error) -> Self {
        if e.is_degenerate() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<mistr_core::Error> for CliError {
    fn from(e: mistr_core::Error) -> Self {
        CliError::from_core(e)
    }
}
