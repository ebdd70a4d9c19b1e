use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", if key.is_empty() { String::new() } else { format!(" in {key}") })]
    Config { key: String, message: String },

    #[error(transparent)]
    Core(#[from] twinpol_core::Error),

    #[error("checks failed: {}", .0.join("; "))]
    Checks(Vec<String>),

    #[error("re-run differs from the first run in: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    NonDeterministic(Vec<PathBuf>),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numerical or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(twinpol_core::Error::InvalidModel(_) | twinpol_core::Error::InvalidInput(_)) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Core(_) => "numerical",
            CliError::Checks(_) => "checks",
            CliError::NonDeterministic(_) => "nondeterministic",
            CliError::Io { .. } => "io",
        }
    }
}
