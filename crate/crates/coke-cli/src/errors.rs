use coke::CokeError;

/// Command-level failure with its process exit code.
///
/// Exit codes: 0 success, 2 input error, 3 data-degeneracy error,
/// 4 numerical failure.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CokeError> for CliError {
    fn from(e: CokeError) -> Self {
        let code = match &e {
            CokeError::InvalidInput(_) | CokeError::Unsupported(_) | CokeError::Io(_) => 2,
            CokeError::EmptyArm { .. } | CokeError::Undefined(_) => 3,
            CokeError::NumericalFailure(_) => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("i/o error: {e}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
