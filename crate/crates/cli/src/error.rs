use std::fmt;

/// A failed run, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or paths. Exit 1.
    Config(String),
    /// Unreadable or malformed data. Exit 2.
    Data(String),
    /// A verification subcommand found a discrepancy. Exit 3.
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<qa_core::Error> for CliError {
    fn from(e: qa_core::Error) -> Self {
        use qa_core::Error as E;
        match e {
            E::Config(_) | E::ConfigMismatch(_) => CliError::Config(e.to_string()),
            E::NonDeterministic(_) => CliError::CheckFailed(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
