use std::path::PathBuf;

use thiserror::Error;

use crate::numstats::StatsError;
use crate::trace::{TextFormat, TraceError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the suites and the report pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{context}: {source}")]
    StatsAt {
        context: String,
        #[source]
        source: StatsError,
    },
    #[error("missing embedding for {text:?} ({format}) at layer {layer}")]
    MissingEmbedding {
        text: String,
        format: TextFormat,
        layer: u32,
    },
    #[error("missing log-prob record: task {task}, item {item:?}, condition {condition:?}")]
    MissingLogProb {
        task: String,
        item: String,
        condition: String,
    },
    #[error("checkpoint {model}@{step} not found in trace")]
    MissingCheckpoint { model: String, step: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown BLiMP phenomenon {0:?}")]
    UnknownPhenomenon(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Error {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn stats_at(context: impl Into<String>) -> impl FnOnce(StatsError) -> Error {
        let context = context.into();
        move |source| Error::StatsAt { context, source }
    }
}
