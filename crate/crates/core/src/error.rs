use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("sample `{sample_id}`: {field} = {value} is not a finite non-negative amount")]
    Unit {
        sample_id: String,
        field: &'static str,
        value: f64,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("sample `{sample_id}`: {reason}")]
    InvalidSample { sample_id: String, reason: String },

    #[error("stored field mean for {field} ({stored}) disagrees with computed mean ({computed})")]
    FieldMeansMismatch {
        field: &'static str,
        stored: f64,
        computed: f64,
    },

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("frame stride must be at least 1, got {0}")]
    BadStride(i64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ingredient `{0}` is not in the vocabulary")]
    UnmappableIngredient(String),

    #[error("ingredient `{0}` is marked as a rejected term")]
    RejectedTerm(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("template is missing placeholder {0}")]
    MissingPlaceholder(&'static str),

    #[error("dialogue turns must be between 2 and 5, got {0}")]
    TurnRange(usize),

    #[error("text encoder unavailable: {0}")]
    EncoderUnavailable(String),

    #[error("ingredient list is empty")]
    EmptyIngredientList,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("token sequence already carries an ingredient token")]
    DoubleFusion,

    #[error("image resolution {actual} does not match the configured {expected}")]
    Resolution { expected: String, actual: String },

    #[error("model is not initialized: {0}")]
    UninitializedModel(String),

    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("checkpoint does not match configuration: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("multimodal client error: {0}")]
    Client(String),

    #[error("could not parse client reply: {0}")]
    ReplyParse(String),

    #[error("field mean for {0} is not positive")]
    ZeroMean(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

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

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidSplit(_) | BadStride(_) | InvalidConfig(_) | ConfigMismatch(_)
            | MissingPlaceholder(_) | TurnRange(_) => ErrorKind::Config,
            Io { .. } | MalformedRecord { .. } | MissingField { .. } | Unit { .. }
            | DuplicateId(_) | InvalidSample { .. } | FieldMeansMismatch { .. } | EmptyManifest
            | UnmappableIngredient(_) | RejectedTerm(_) | InvalidVocabulary(_)
            | EmptyIngredientList | EmptyDataset | Image(_) | Json(_) | Checkpoint(_)
            | ZeroMean(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}
