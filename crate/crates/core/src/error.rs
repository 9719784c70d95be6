use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the band-selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("size mismatch: header declares {expected} samples but data holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("ground truth: {0}")]
    GroundTruth(String),

    #[error("no labeled pixels")]
    NoLabeledPixels,

    #[error("band range {lo}..={hi} invalid for a cube with {n_bands} bands (1-based)")]
    BandRange { lo: usize, hi: usize, n_bands: usize },

    #[error("band {band} out of range 1..={n_bands}")]
    BandIndex { band: usize, n_bands: usize },

    #[error("synthetic spec unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("synthetic spec: {0}")]
    SyntheticSpec(String),

    #[error("empty input")]
    EmptyInput,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("single class: training data holds only one class")]
    SingleClass,

    #[error("feature dimensionality mismatch: model expects {expected}, got {actual}")]
    FeatureDimension { expected: usize, actual: usize },

    #[error("training failed while evaluating band {band}: {source}")]
    Training {
        band: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("label {label} out of range 0..={max}")]
    LabelRange { label: u16, max: usize },

    #[error("model file: {0}")]
    Model(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
