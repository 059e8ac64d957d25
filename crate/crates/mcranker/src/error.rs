//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the mcranker library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate passage id {id:?}")]
    DuplicatePassageId { id: String },

    #[error("query {id:?} has empty text")]
    EmptyQueryText { id: String },

    #[error("invalid run: {msg}")]
    InvalidRun { msg: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("unknown passage id {id:?}")]
    UnknownPassage { id: String },

    #[error("bad index file: {msg}")]
    IndexFormat { msg: String },

    #[error("http error {status}: {body}")]
    Http { status: u16, body: String },

    #[error("http transport error: {msg}")]
    HttpTransport { msg: String },

    #[error("backend retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("replay transcript has no entry for cache key {cache_key}")]
    ReplayMiss { cache_key: String },

    #[error("LLM call budget exhausted")]
    BudgetExhausted,

    #[error("no balanced JSON object found in response: {raw:?}")]
    JsonExtract { raw: String },

    #[error("response object has no key {key:?}")]
    MissingScoreKey { key: String },

    #[error("value under key {key:?} is not an integer score: {value}")]
    NonNumericScore { key: String, value: String },

    #[error("template {stage}: binding for slot {{{slot}}} is missing")]
    MissingSlot { stage: String, slot: String },

    #[error("template {stage}: binding {{{slot}}} does not match any slot")]
    ExtraBinding { stage: String, slot: String },

    #[error("assessor prompt needs at least one member result")]
    EmptyAssessorInput,

    #[error("annotation team is empty")]
    EmptyTeam,

    #[error("recruiting failed for query {query_id:?}: {msg}")]
    RecruitFailed { query_id: String, msg: String },

    #[error("criteria generation failed for annotator {label:?}: {msg}")]
    CriteriaFailed { label: String, msg: String },

    #[error("reranking query {query_id:?} failed: {msg}")]
    RerankFailed { query_id: String, msg: String },

    #[error("no queries to evaluate")]
    EmptyRun,

    #[error("invalid configuration: {msg}")]
    Config { msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
