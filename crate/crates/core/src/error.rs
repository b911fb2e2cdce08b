use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data or parameters violate a precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A numerical routine could not produce an answer.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    /// True for errors caused by the caller's input rather than by a solver.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Solver(_))
    }
}
