use thiserror::Error;

/// Errors raised across the estimation, classification and I/O pipeline.
#[derive(Debug, Error)]
pub enum KronError {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("shape mismatch for {what}: expected {expected}, got {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("insufficient samples for {context}: need at least {required}, got {found}")]
    InsufficientSamples {
        context: String,
        required: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("temporal factor {index} is not Toeplitz")]
    NotToeplitz { index: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("track '{track_id}' has {frames} frames, fewer than the window length {window}")]
    TrackTooShort {
        track_id: String,
        frames: usize,
        window: usize,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("malformed model document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KronError {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KronError::NotPositiveDefinite(_) | KronError::Numerical(_)
        )
    }
}

pub type Result<T, E = KronError> = std::result::Result<T, E>;
