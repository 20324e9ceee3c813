use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: invalid `{field}`: {message}")]
    InvalidRecord {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate document id `{id}`")]
    DuplicateId { id: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("unknown group `{group}` for attribute `{attribute}`")]
    UnknownGroup { attribute: String, group: String },

    #[error("unknown document id `{0}`")]
    UnknownId(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("slot `{slot}` of attribute `{attribute}` has no entry in group `{group}`")]
    IncompleteMapping {
        attribute: String,
        group: String,
        slot: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("document `{id}` has no score")]
    MissingScore { id: String },

    #[error("group `{group}` of attribute `{attribute}` is empty")]
    EmptyGroup { attribute: String, group: String },

    #[error("cannot compute {metric} for group `{group}`: {reason}")]
    DegenerateMetric {
        group: String,
        metric: String,
        reason: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("requested {requested} components but the centered data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("cannot stratify group `{group}`: {reason}")]
    Infeasible { group: String, reason: String },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
