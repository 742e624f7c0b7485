use thiserror::Error;

/// Errors raised by the clustering pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SscError {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("target is not representable by the dictionary (best residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("combinatorial budget exceeded: {supports} supports > {budget}")]
    BudgetExceeded { supports: u128, budget: u128 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, SscError>;
