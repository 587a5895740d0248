use thiserror::Error;

/// Errors produced by the engine, evidence pipeline, datasets and transfer ops.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tensor data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },

    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("prediction/label sequences differ in length: {predictions} vs {labels}")]
    SequenceLengthMismatch { predictions: usize, labels: usize },

    #[error("degenerate evidence: confusion-matrix diagonal is all zero")]
    DegenerateEvidence,

    #[error("network has no convolutional layer to decompose")]
    NoConvLayer,

    #[error("filter geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("class count mismatch: network outputs {network}, dataset has {dataset}")]
    ClassCountMismatch { network: usize, dataset: usize },

    #[error("bad IDX magic in {path}: {found:#010x}")]
    IdxBadMagic { path: String, found: u32 },

    #[error("IDX dimension error in {path}: {detail}")]
    IdxDimensionMismatch { path: String, detail: String },

    #[error("truncated IDX file {path}: expected {expected} payload bytes, found {actual}")]
    IdxTruncated {
        path: String,
        expected: usize,
        actual: usize,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("dataset has {actual} channels, operation requires {expected}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("class {class} has {available} samples, fewer than the {parts} requested split parts")]
    SplitTooSmall {
        class: usize,
        parts: usize,
        available: usize,
    },

    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),

    #[error("{path}: {source}")]
    FileIo {
        path: String,
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
