/// Errors produced by tensor operations.
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    /// Shapes of the operands do not line up.
    #[error("{op}: dimension error: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A structural parameter (stride, groups, factor, ...) is invalid.
    #[error("{op}: config error: {detail}")]
    Config { op: &'static str, detail: String },

    /// The computation produced or would produce an undefined value.
    #[error("{op}: numeric error: {detail}")]
    Numeric { op: &'static str, detail: String },

    /// A parameter update was requested without a populated gradient.
    #[error("optimizer error: {0}")]
    Optimizer(String),
}

impl TensorError {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Config {
            op,
            detail: detail.into(),
        }
    }

    pub fn numeric(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Numeric {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
