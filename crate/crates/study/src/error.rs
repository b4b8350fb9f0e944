use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Core(#[from] msynth_core::Error),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("unknown rater {0:?}")]
    UnknownRater(String),

    #[error("rater {rater:?} has no trial {trial}")]
    UnknownTrial { rater: String, trial: usize },

    #[error("stars must be between 1 and 6, got {0}")]
    InvalidStars(i64),

    #[error("rater {rater:?} already rated trial {trial}")]
    Duplicate { rater: String, trial: usize },

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl StudyError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StudyError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StudyError::Core(e) => e.kind(),
            StudyError::Capacity(_) => "capacity",
            StudyError::Plan(_) => "plan",
            StudyError::UnknownRater(_) | StudyError::UnknownTrial { .. } => "not_found",
            StudyError::InvalidStars(_) => "validation",
            StudyError::Duplicate { .. } => "conflict",
            StudyError::Bind { .. } => "bind",
            StudyError::Io { .. } => "io",
            StudyError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, StudyError>;
