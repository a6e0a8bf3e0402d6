use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lower}, {upper}]: {reason}")]
    InvalidInterval {
        lower: f64,
        upper: f64,
        reason: &'static str,
    },

    #[error("invalid map parameter: {0}")]
    InvalidMap(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("negative or non-finite count {0}")]
    InvalidCount(f64),

    #[error("invalid recoding policy: {0}")]
    InvalidPolicy(String),

    #[error("schema: missing required role `{0}`")]
    MissingRole(String),

    #[error("schema: column `{column}` for role `{role}` not found in header")]
    UnknownColumn { role: String, column: String },

    #[error("schema line {line}: {message}")]
    SchemaSyntax { line: usize, message: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: {source}")]
    BadValue {
        row: usize,
        column: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} group empty")]
    EmptyGroup(&'static str),

    #[error("{0} transport undefined: control pre-period width {1} is not above the floor")]
    TransportUndefined(&'static str, f64),

    #[error("covariate cell `{cell}`: {reason}")]
    CellViolation { cell: String, reason: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("variance undefined: {0}")]
    VarianceUndefined(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
