use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("invalid dimension {0}: need D >= 2")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("integration blow-up at t = {t}: {reason}; try a smaller dt")]
    IntegrationBlowup { t: f64, reason: String },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {err:e}")]
    Quadrature { a: f64, b: f64, err: f64 },

    #[error("exhaustive permutation search refused for D = {0} (limit is 9)")]
    CostGuard(usize),

    #[error("target impurity {0:e} not reached within the simulated horizon")]
    Unreachable(f64),

    #[error("distribution grid needs refinement: {0}")]
    RefineGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type QpResult<T> = Result<T, QpError>;
