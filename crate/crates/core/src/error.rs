use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular metric at {point:?}")]
    SingularMetric { point: Vec<f64> },

    #[error("value {value:?} at grid point {index} lies outside the chart domain")]
    OutOfChart { index: usize, value: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operation not supported in this target mode: {0}")]
    UnsupportedMode(String),

    #[error("degenerate immersion at grid point {index}")]
    DegenerateImmersion { index: usize },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
