//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors surfaced by indexing, scoring, training, and persistence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty passage: cannot score against zero token vectors")]
    EmptyPassage,

    #[error("cannot pool empty sequence")]
    EmptyPooling,

    #[error("stale index: built from checkpoint version {index_version}, encoder is at version {params_version}")]
    StaleIndex {
        index_version: u64,
        params_version: u64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("bad magic in {path}: expected {expected}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("truncated file {0}")]
    Truncated(PathBuf),

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dangling gold passage id `{gold}` for query `{query}`")]
    DanglingGold { query: String, gold: String },

    #[error("query `{0}` missing from rankings")]
    MissingRanking(String),

    #[error("score maps disagree on passage ids; only in first: {only_a:?}, only in second: {only_b:?}")]
    ScoreKeyMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("passage `{passage}` has only {available} training queries, need {needed}")]
    NotEnoughExamples {
        passage: String,
        available: usize,
        needed: usize,
    },

    #[error("requested {requested} clusters but index has only {available} token vectors")]
    TooManyClusters { requested: usize, available: usize },

    #[error("{role} worker failed: {detail}")]
    RoleFailed { role: &'static str, detail: String },

    #[error("invalid {what}: {detail}")]
    InvalidInput { what: &'static str, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
