use thiserror::Error;

use crate::field::Field;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error(
        "projection did not converge in {sweeps} sweeps \
         (nehari residual {nehari:.3e}, barycenter offset {barycenter:.3e})"
    )]
    Projection {
        sweeps: usize,
        nehari: f64,
        barycenter: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("solver failed after {iterations} iterations: {message}")]
    Solver {
        message: String,
        iterations: usize,
        last: Box<Field>,
    },

    #[error("multiplier extraction failed: {0}")]
    Extraction(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
