use std::fmt;
use std::path::Path;

use cgm_core::Error;

/// Broad failure class; each maps to its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, config file or parameter values.
    Config,
    /// Missing, unreadable, malformed or unwritable files.
    Io,
    /// Divergence, non-finite values or any other failure in the numerics.
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn of(e: &Error) -> Self {
        if e.is_io() {
            return ErrorKind::Io;
        }
        match e {
            Error::InvalidConfig(_) | Error::InvalidThresholds { .. } => ErrorKind::Config,
            Error::Stage { source, .. } => ErrorKind::of(source),
            _ => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            kind: ErrorKind::of(&e),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("csv: {e}"),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
