use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data for class {class}: requested {requested}, available {available}")]
    InsufficientData {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("malformed input at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("degenerate batch: {0} anchors, need at least 2")]
    DegenerateBatch(usize),

    #[error("label {label} is outside the set of seen classes")]
    UnseenLabel { label: usize },

    #[error("single-pass violation: task {task} batch {batch} was already consumed")]
    SinglePass { task: usize, batch: usize },

    #[error("task stream {0} has already been consumed")]
    StreamConsumed(usize),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("accuracy matrix row {row} is incomplete")]
    IncompleteRow { row: usize },

    #[error("{}: {source}", path.display())]
    Dataset {
        path: std::path::PathBuf,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_file(path: &std::path::Path) -> impl FnOnce(Error) -> Error + '_ {
        move |e| Error::Dataset {
            path: path.to_path_buf(),
            source: Box::new(e),
        }
    }

    pub(crate) fn dimension(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
