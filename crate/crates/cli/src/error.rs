use std::fmt;
use std::process::ExitCode;

use clusterfuse::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Input file missing, unreadable as CSV/JSON, or malformed values.
    Parse(String),
    /// Invalid flag values or tuning parameters.
    Parameter(String),
    /// A class with no usable observations.
    DegenerateClass(String),
    /// Output was written but a solver did not converge.
    NotConverged(String),
    /// Writing output failed.
    Io(String),
    /// Model and data dimensions disagree.
    Dimension(String),
    /// Numerical breakdown inside a solver.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 3,
            CliError::Parameter(_) => 4,
            CliError::DegenerateClass(_) => 5,
            CliError::NotConverged(_) => 6,
            CliError::Io(_) => 7,
            CliError::Dimension(_) => 8,
            CliError::Numeric(_) => 9,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Parameter(m) => write!(f, "parameter error: {m}"),
            CliError::DegenerateClass(m) => write!(f, "degenerate class: {m}"),
            CliError::NotConverged(m) => write!(f, "warning: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(m) => CliError::Parameter(m),
            Error::Shape(m) => CliError::Dimension(m),
            Error::Init(m) => CliError::DegenerateClass(m),
            Error::DegenerateClass { class, reason } => {
                CliError::DegenerateClass(format!("class {class}: {reason}"))
            }
            Error::Domain(m) | Error::Numeric(m) => CliError::Numeric(m),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
