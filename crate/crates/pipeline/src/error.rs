use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("data error at {path}: {detail}")]
    Data { path: PathBuf, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Model(#[from] ynet_model::ModelError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn data(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        PipelineError::Data {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

impl From<ynet_tensor::TensorError> for PipelineError {
    fn from(e: ynet_tensor::TensorError) -> Self {
        PipelineError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
