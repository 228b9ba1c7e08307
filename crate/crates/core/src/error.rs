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

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {record}: {message}")]
    InvalidRecord { record: String, message: String },

    #[error("sentence is not labeled with a relation (index {0})")]
    Unlabeled(usize),

    #[error("template for relation {relation} is missing the {placeholder} placeholder: {template:?}")]
    Template {
        relation: String,
        placeholder: &'static str,
        template: String,
    },

    #[error("entity type missing on {0} span")]
    MissingType(&'static str),

    #[error("malformed entity markers: {0}")]
    Markers(String),

    #[error("max length {max_len} cannot hold the structural tokens plus content")]
    TooShort { max_len: usize },

    #[error("empty relation bags")]
    EmptyBags,

    #[error("degenerate bag for relation {relation}: {size} sentence(s)")]
    DegenerateBag { relation: String, size: usize },

    #[error("need {needed} relations with at least two sentences, found {available}")]
    InsufficientRelations { needed: usize, available: usize },

    #[error("insufficient data for relation {relation}: need {needed}, have {have}")]
    InsufficientData {
        relation: String,
        needed: usize,
        have: usize,
    },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range (vocabulary size {vocab})")]
    LabelRange { label: usize, vocab: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
