use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fracgraph::Error),

    #[error("{0}")]
    Argument(String),

    #[error("config file {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Verification(String),

    #[error("{failed} of {total} sweep cases failed")]
    Sweep { failed: usize, total: usize },
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Argument(_) => "argument",
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Verification(_) => "verification",
            CliError::Sweep { .. } => "sweep",
        }
    }

    /// `error[category]: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.category(), msg)
    }
}

pub fn arg_err(msg: impl Into<String>) -> CliError {
    CliError::Argument(msg.into())
}

pub fn read_file(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write_file(path: &std::path::Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
