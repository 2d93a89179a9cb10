use std::path::Path;

/// Failure of a command, carrying the process exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("corrupt file {path}: entry {entry}: {detail}")]
    Corrupt {
        path: String,
        entry: String,
        detail: String,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
            CliError::Corrupt { .. } => 5,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn corrupt(path: &Path, entry: impl Into<String>, detail: impl Into<String>) -> Self {
        CliError::Corrupt {
            path: path.display().to_string(),
            entry: entry.into(),
            detail: detail.into(),
        }
    }
}

impl From<synres::Error> for CliError {
    fn from(e: synres::Error) -> Self {
        match e {
            synres::Error::Io(m) => CliError::Io(m),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            synres::Error::TrainAbort { ref source, .. }
                if matches!(**source, synres::Error::Io(_)) =>
            {
                CliError::Io(e.to_string())
            }
            e => CliError::Config(e.to_string()),
        }
    }
}
