use thiserror::Error;

/// Errors raised by the phase-estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image must be square, got {width}x{height}")]
    NonSquare { width: usize, height: usize },

    #[error("side length {0} is not a power of two (>= 2)")]
    NotPowerOfTwo(usize),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("sample buffer of length {len} does not match {width}x{height}")]
    BufferLength { len: usize, width: usize, height: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("spectrum violates conjugate symmetry (imaginary residue {residue:e} vs magnitude {magnitude:e})")]
    ConjugateSymmetry { residue: f64, magnitude: f64 },

    #[error("invalid frame spec: {0}")]
    InvalidFrame(String),

    #[error("argument of zero is undefined")]
    UndefinedArgument,

    #[error("correlation undefined for zero-variance input")]
    ZeroVariance,

    #[error("message violates the band condition: {fraction:.4} of its energy lies above omega_c/2")]
    BandLimit { fraction: f64 },

    #[error("no spectral peak outside DC")]
    NoPeak,

    #[error("ambiguous spectral peak: bins {first:?} and {second:?} within 1% magnitude")]
    AmbiguousPeak {
        first: (i64, i64),
        second: (i64, i64),
    },

    #[error("empty scale stack")]
    EmptyStack,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
