use std::fmt;
use std::process::ExitCode;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files. Exit code 1.
    Validation(String),
    /// Failure while running a valid request. Exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<prefgeom::Error> for CliError {
    fn from(e: prefgeom::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Attaches the flag a failing input came from.
pub fn for_flag(flag: &str, e: impl Into<CliError>) -> CliError {
    match e.into() {
        CliError::Validation(m) => CliError::Validation(format!("--{flag}: {m}")),
        CliError::Runtime(m) => CliError::Runtime(format!("--{flag}: {m}")),
    }
}

pub type CliResult<T> = Result<T, CliError>;
