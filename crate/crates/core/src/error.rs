use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The constrained stiffness matrix is not positive definite. `pivot` is the
    /// index (in the fill-reducing ordering) of the first non-positive pivot.
    #[error("structure is a mechanism or singular (non-positive pivot at {pivot})")]
    Mechanism { pivot: usize },

    #[error("{what} is not symmetric positive definite (non-positive pivot at {pivot})")]
    NotSpd { what: &'static str, pivot: usize },

    #[error("numerical consistency: {0}")]
    NumericalConsistency(String),

    #[error("optimisation aborted: {0}")]
    OptimizationAbort(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
