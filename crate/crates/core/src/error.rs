use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: malformed record at line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at frame {frame}, dimension {dim}")]
    NonFinite { frame: usize, dim: usize },

    #[error("segmentation covers {covered} frames but sequence has {expected}")]
    Coverage { covered: usize, expected: usize },

    #[error("rank deficient: requested {requested} components but data supports only {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("cannot fit {k} components: only {distinct} distinct samples")]
    Collapse { k: usize, distinct: usize },

    #[error("no legal path: {0}")]
    NoPath(String),

    #[error("all tokens pruned at frame {frame}; try a wider beam")]
    BeamPruned { frame: usize },

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("no model for unit(s): {0}")]
    MissingModel(String),

    #[error("units without training segments: {0}")]
    UntrainedUnits(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the decoding search itself rather than of the inputs.
    pub fn is_decode_failure(&self) -> bool {
        matches!(self, Error::NoPath(_) | Error::BeamPruned { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
