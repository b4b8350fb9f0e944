use std::path::PathBuf;

/// Errors produced by the synthesis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("condition error: {0}")]
    Condition(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("image encoding error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Length { .. } => "length",
            Error::Dimension(_) => "dimension",
            Error::Shape(_) => "shape",
            Error::Argument(_) => "argument",
            Error::Condition(_) => "condition",
            Error::Data(_) => "data",
            Error::Capacity(_) => "capacity",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Tensor(_) => "tensor",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
