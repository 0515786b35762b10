use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation (bad spec, bad config, precondition violated).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A computation diverged, overflowed or hit an iteration cap.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The requested (process, family) pairing has no implementation on this path.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Prefixes the message with where the failure happened, keeping the kind.
    pub fn context(self, at: &str) -> Self {
        match self {
            Error::Invalid(m) => Error::Invalid(format!("{at}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{at}: {m}")),
            Error::Unsupported(m) => Error::Unsupported(format!("{at}: {m}")),
            other => other,
        }
    }

    /// True for failures caused by the caller's input rather than the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Unsupported(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
