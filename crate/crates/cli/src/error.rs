use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nowcast::Error),

    #[error("config file {path}: {message}")]
    ConfigFile { path: String, message: String },

    #[error("invalid arguments: {0}")]
    Usage(String),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use nowcast::Error as E;
        let code = match self {
            CliError::Core(E::Io(_)) => 1,
            CliError::Core(E::Config { .. }) | CliError::ConfigFile { .. } | CliError::Usage(_) => {
                2
            }
            CliError::Core(E::Shape(_) | E::Format(_) | E::Csv(_)) | CliError::Manifest(_) => 3,
            CliError::Core(E::Range(_)) => 4,
            CliError::Core(E::Domain(_) | E::InfeasibleWindow(_)) => 5,
        };
        ExitCode::from(code)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
