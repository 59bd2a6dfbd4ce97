use qpurify::QpError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] QpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Core(e) => match e {
                QpError::InvalidDimension(_) => "invalid_dimension",
                QpError::DimensionMismatch { .. } => "dimension_mismatch",
                QpError::InvalidState(_) => "invalid_state",
                QpError::InvalidOperator(_) => "invalid_operator",
                QpError::IntegrationBlowup { .. } => "integration_blowup",
                QpError::Quadrature { .. } => "quadrature",
                QpError::CostGuard(_) => "cost_guard",
                QpError::Unreachable(_) => "unreachable",
                QpError::RefineGrid(_) => "refine_grid",
                QpError::InvalidArgument(_) => "invalid_argument",
                QpError::Io(_) => "io",
            },
            CliError::Io(_) => "io",
            CliError::ChecksFailed(_) => "checks_failed",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}
