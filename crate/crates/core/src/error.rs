use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("under-resolved ({detail}); need at least N = {required_n} points per axis")]
    UnderResolved { required_n: usize, detail: String },
    #[error("time step too large for the potential: need n_steps >= {min_steps}")]
    StepSize { min_steps: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("unknown catalog tag `{0}`")]
    UnknownTag(String),
    #[error("hypotheses violated:\n  - {}", .0.join("\n  - "))]
    Hypotheses(Vec<String>),
    #[error("numerical guard tripped: {0}")]
    Guard(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
