use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Bad or missing input. `field` is a path into the offending document or
    /// the flag name.
    #[error("{}{message}", field.as_deref().map(|f| format!("at `{f}`: ")).unwrap_or_default())]
    Config { field: Option<String>, message: String },

    #[error(transparent)]
    Core(cqps_core::Error),

    #[error("{0}")]
    Io(String),

    #[error("replay diverged: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn missing_file(path: &Path, err: &std::io::Error) -> Self {
        CliError::Config {
            field: None,
            message: format!("cannot read {}: {err}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Core(e) if is_config_error(e) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Io(_) | CliError::Diverged(_) => EXIT_FAILURE,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage error",
            EXIT_CONFIG => "config error",
            _ => "error",
        }
    }
}

/// Invalid inputs, as opposed to numerical failures of a valid run.
fn is_config_error(e: &cqps_core::Error) -> bool {
    use cqps_core::Error::*;
    match e {
        Validation { .. } | Parse { .. } | Identifiability(_) | MemoryGuard { .. } => true,
        Cell { source, .. } => is_config_error(source),
        _ => false,
    }
}

impl From<cqps_core::Error> for CliError {
    fn from(e: cqps_core::Error) -> Self {
        match e {
            cqps_core::Error::Validation { field, reason } => CliError::Config {
                field: Some(field),
                message: reason,
            },
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
