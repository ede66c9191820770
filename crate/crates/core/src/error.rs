use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {col} ({name}): cannot parse {value:?}")]
    Parse {
        row: usize,
        col: usize,
        name: String,
        value: String,
    },

    #[error("row {row}, column {col} ({name}): ordinal value {value} outside 1..={levels}")]
    OrdinalRange {
        row: usize,
        col: usize,
        name: String,
        value: String,
        levels: u32,
    },

    #[error("ragged CSV: row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate column: {0}")]
    DegenerateMarginal(#[from] crate::marginals::Degeneracy),

    #[error("column {col} is degenerate: {reason}")]
    Degenerate { col: usize, reason: String },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("amputation infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
