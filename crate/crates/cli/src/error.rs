use std::fmt;

use metilt::Error;

/// Exit codes: 0 success, 1 parse or usage error, 2 validation failure,
/// 3 precondition failure (tilting rate or transience).
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Parse(String),
    Usage(String),
    Validation(String),
    Precondition(String),
    Io(String),
    /// Some reproduce-example checks failed; the table was already printed.
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Validation(_) | CliError::ChecksFailed(_) => 2,
            CliError::Precondition(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Precondition(m) => write!(f, "precondition failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::ChecksFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::LambdaTooSmall { .. } | Error::NotTransient { .. } => {
                CliError::Precondition(msg)
            }
            Error::ZeroPaths | Error::InvalidGrid(_) => CliError::Usage(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
