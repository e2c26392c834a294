use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed program point header `{text}`")]
    MalformedHeader { line: usize, text: String },

    #[error("no invariant records found")]
    EmptyInput,

    #[error("atom is outside the linear fragment: {0}")]
    UnsupportedAtom(String),

    #[error("modified method set is empty")]
    EmptyModifiedSet,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid embedding `{id}`: {reason}")]
    InvalidEmbedding { id: String, reason: String },

    #[error("training data contains a single class")]
    SingleClassData,

    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("{0} is undefined for this confusion matrix")]
    UndefinedMetric(&'static str),

    #[error("record `{id}`: cannot read code file {path}")]
    MissingCodeFile { id: String, path: PathBuf },

    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),

    #[error("validation set has no correct patches")]
    NoCorrectPatches,

    #[error("{stage} stage is missing inputs: {paths:?}")]
    MissingInputs { stage: String, paths: Vec<PathBuf> },

    #[error("syntactic stage is enabled but no model was supplied")]
    ModelRequired,

    #[error("manifest contains no records")]
    EmptyManifest,

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
