use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("malformed row at line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("type error at line {line}, column `{column}`: {message}")]
    TypeError {
        line: usize,
        column: String,
        message: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("table is empty or too small: {0}")]
    EmptyTable(String),
    #[error("invalid split fractions: {0}")]
    BadSplit(String),
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
    #[error("column `{0}` already has missing cells")]
    AlreadyMissing(String),
    #[error("cell (row {row}, column `{column}`) is not masked")]
    CellNotMasked { row: usize, column: String },
    #[error("cell (row {row}, column `{column}`) is still missing")]
    CellStillMissing { row: usize, column: String },
    #[error("column `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("fit table has no rows")]
    EmptyFitTable,
    #[error("singular system while regressing column `{0}`; increase the ridge penalty")]
    SingularSystem(String),
    #[error("row has no missing target")]
    NoMissingTarget,
    #[error("input table has missing cells")]
    IncompleteInput,
    #[error("prompt does not follow the template grammar: {0}")]
    PromptGrammar(String),
    #[error("backend not fitted")]
    NotFitted,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("missing label column `{0}`")]
    MissingLabel(String),
    #[error("input has masked cells")]
    MaskedInput,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("insufficient candidates: need {needed}, have {available}")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("no relevant items")]
    NoRelevantItems,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("results mix tasks: {0} and {1}")]
    MixedTasks(String, String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, bad files) as opposed
    /// to internal failures.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::SingularSystem(_) | Error::Serde(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
