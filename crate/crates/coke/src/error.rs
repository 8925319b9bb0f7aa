use thiserror::Error;

/// Errors surfaced by the estimation and diagnostic routines.
#[derive(Debug, Error)]
pub enum CokeError {
    /// Malformed caller input: dimension mismatches, non-finite values,
    /// nonpositive regularizers, empty candidate lists.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A treatment arm required by an arm-indicator regression is empty.
    /// `split` names the data subset in which the arm was missing.
    #[error("empty arm {arm} in {split}")]
    EmptyArm { arm: u8, split: String },

    /// A factorization failed even after jitter escalation.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The requested quantity is not defined for this configuration,
    /// e.g. the supremum bound of a tabulated kernel without a declared bound.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The result is mathematically undefined for the given data,
    /// e.g. a correlation of a zero-variance vector.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CokeError>;

impl CokeError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CokeError::InvalidInput(msg.into())
    }

    /// Rewrites the split label of an `EmptyArm` error, leaving other
    /// variants untouched. Pipelines use this to name the offending split.
    pub fn with_split(self, split: &str) -> Self {
        match self {
            CokeError::EmptyArm { arm, .. } => CokeError::EmptyArm {
                arm,
                split: split.to_string(),
            },
            other => other,
        }
    }
}
