use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The input could not be read as a spec document at all.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    /// The document parsed but violates a model invariant.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// An enumeration would need more points than the caller allowed.
    #[error("budget exceeded: {needed} items needed, budget is {budget}")]
    Budget { needed: u128, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Exit code under the CLI contract: 1 parse, 2 invariant, 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => 1,
            Error::Invariant(_) | Error::InvalidArgument(_) => 2,
            Error::Budget { .. } => 4,
        }
    }
}

/// Fails with [`Error::Budget`] when `needed` exceeds `budget`.
pub(crate) fn check_budget(needed: u128, budget: u64) -> Result<()> {
    if needed > budget as u128 {
        Err(Error::Budget { needed, budget })
    } else {
        Ok(())
    }
}
