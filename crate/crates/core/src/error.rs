use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Conditioning value landed so far in the tail that the conditional mass
    /// is numerically zero; the caller is expected to resample the trial.
    #[error("degenerate condition: residual mass {mass:.3e} below threshold")]
    DegenerateCondition { mass: f64 },

    #[error("resource budget exceeded: requested depth {requested}, feasible maximum {feasible}")]
    BudgetExceeded { requested: usize, feasible: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
