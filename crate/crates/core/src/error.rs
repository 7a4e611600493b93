use std::path::PathBuf;

use thiserror::Error;

use crate::model::TaskKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system `{0}` (not in roster)")]
    UnknownSystem(String),
    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: TaskKind, found: TaskKind },
    #[error("degenerate bounding box ({xmin}, {ymin}, {xmax}, {ymax})")]
    DegenerateBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error("negative character offset in span {docid}:{start}-{end}")]
    NegativeOffset { docid: String, start: i64, end: i64 },
    #[error("invalid span {docid}:{start}-{end}")]
    InvalidSpan { docid: String, start: i64, end: i64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("records for more than one key passed to grouping")]
    MixedKeys,
    #[error("system `{0}` did not contribute to this group")]
    SystemNotInGroup(String),
    #[error("missing document `{0}`")]
    MissingDocument(String),
    #[error("category `{0}` is not in the configured inventory")]
    UnknownCategory(String),
    #[error("slot `{0}` is not in the slot inventory")]
    UnknownSlot(String),
    #[error("training set has a single class ({positives} positive of {total})")]
    DegenerateLabels { positives: usize, total: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("incompatible model: {0}")]
    IncompatibleModel(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    ///
    /// 2 for data errors, 3 for model/roster incompatibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IncompatibleModel(_) => 3,
            _ => 2,
        }
    }
}
