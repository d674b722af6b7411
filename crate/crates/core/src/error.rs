use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Usage,
    /// Unreadable, malformed or inconsistent input data.
    Data,
    /// A metric could not be computed on otherwise valid data.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes {found:?}, expected \"EMBD\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data after payload: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },

    #[error("non-finite value at layer {layer}, row {row}, column {col}")]
    NonFinite { layer: usize, row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("layer index {index} out of range for dump with {num_layers} layers")]
    LayerOutOfRange { index: usize, num_layers: usize },

    #[error("degenerate spectrum: total variance is zero (all points identical)")]
    DegenerateSpectrum,

    #[error("row {row} has zero norm")]
    ZeroVector { row: usize },

    #[error("too few points: need at least {needed}, have {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("layer has {n_samples} rows, fewer than the batch floor {batch_floor}")]
    InsufficientSamples { n_samples: usize, batch_floor: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layer {layer}, batch {batch}: {source}")]
    Batch {
        layer: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mixed models in series: {0}")]
    MixedModels(String),

    #[error("duplicate checkpoint step {0} in series")]
    DuplicateStep(u64),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) => ErrorClass::Usage,
            Error::DegenerateSpectrum
            | Error::ZeroVector { .. }
            | Error::TooFewPoints { .. }
            | Error::DegenerateConfiguration(_) => ErrorClass::Numerical,
            Error::Batch { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
