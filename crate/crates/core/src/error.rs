use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A problem with the hyperparameter axes of a manifest.
    #[error("axis {axis:?}: {message}")]
    Axis { axis: String, message: String },

    /// A problem with one model entry, located by record index and field name.
    #[error("record {index}, field {field:?}: {message}")]
    Record {
        index: usize,
        field: &'static str,
        message: String,
    },

    #[error("record {index} duplicates record {first}: same coord and replica")]
    DuplicateRecord { index: usize, first: usize },

    #[error("measure {name:?}: {message}")]
    Measure { name: String, message: String },

    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),

    #[error("measure {0:?} already exists")]
    MeasureCollision(String),

    #[error("unknown axis {0:?}")]
    UnknownAxis(String),

    #[error("axis {0:?} is single-valued and cannot be scored")]
    SingleValuedAxis(String),

    #[error("no multi-valued axis to score")]
    NoEligibleAxis,

    #[error("no group with at least two models: {0}")]
    NoPairs(String),

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no task to aggregate")]
    EmptyTaskList,

    #[error("task {0:?} appears more than once")]
    DuplicateTask(String),

    #[error("archive {path}: {message}")]
    Archive { path: PathBuf, message: String },

    #[error("layer {layer:?}: {message}")]
    Layer { layer: String, message: String },

    #[error("archive has no weight layers")]
    NoWeightLayers,

    #[error("layer {layer:?}: power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        layer: String,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid noise level {0}: must be finite and non-negative")]
    InvalidSigma(f64),

    #[error("unknown task preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid plant: {0}")]
    Plant(String),
}

impl Error {
    pub(crate) fn record(index: usize, field: &'static str, message: impl Into<String>) -> Self {
        Error::Record {
            index,
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
