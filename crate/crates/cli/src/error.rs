use std::fmt;
use std::path::{Path, PathBuf};

use hybgnn::data::DataError;
use hybgnn::Error;

/// Exit code 2 for configuration and I/O problems, 1 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                Error::Config(_)
                | Error::Io { .. }
                | Error::Data(_)
                | Error::ParamFile(_)
                | Error::ChannelMismatch { .. }
                | Error::SignalTooShort { .. }
                | Error::NotEnoughSubjects { .. } => 2,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Core(Error::Data(e))
    }
}

impl From<hybgnn::params_io::ParamFileError> for CliError {
    fn from(e: hybgnn::params_io::ParamFileError) -> Self {
        CliError::Core(Error::ParamFile(e))
    }
}
