use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structured dataset validation failures; rows are 1-based data rows
/// (header excluded).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("input is empty or has no header row")]
    Empty,
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },
    #[error("row {row}, column `{column}`: negative attribute value {value}")]
    NegativeAttribute {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: duplicate plot_id `{id}`")]
    DuplicatePlotId { row: usize, id: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{context}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("prediction failed for plot `{plot}`: {source}")]
    Prediction {
        plot: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// An I/O error that names the file it concerns.
    pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
