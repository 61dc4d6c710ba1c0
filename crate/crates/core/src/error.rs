use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unknown disk model `{0}`")]
    UnknownModel(String),
    #[error("statistics error: {0}")]
    Stats(#[from] crate::numstats::StatsError),
    #[error("no change point detected for any failed disk; choose the backtracking window manually (--n-days)")]
    NoChangeDetected,
    #[error("schema mismatch: model trained on {expected:016x}, matrix has {found:016x}")]
    SchemaMismatch { expected: u64, found: u64 },
    #[error("training set has no positive samples")]
    NoPositives,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
