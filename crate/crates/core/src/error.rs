use thiserror::Error;

/// Errors raised by estimator, optimizer and referee operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpiderError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("batch size must be at least 1")]
    EmptyBatch,

    #[error("epoch exhausted: epoch position {epoch_pos} would reach q = {q}; reset first")]
    EpochExhausted { epoch_pos: usize, q: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("missing problem constant `{0}`")]
    MissingConstant(&'static str),

    #[error("trajectory step {step} moves {distance:.6e}, above the bound {bound:.6e}")]
    DisplacementViolation { step: usize, distance: f64, bound: f64 },

    #[error("enumeration needs {paths} paths, above the cap {cap}")]
    EnumerationCap { paths: f64, cap: u64 },

    #[error("dense Hessian dimension {dim} exceeds the cap {cap}")]
    DenseCap { dim: usize, cap: usize },

    #[error("unknown problem suite `{0}`")]
    UnknownSuite(String),

    #[error("operation requires finite-sum mode")]
    OnlineUnsupported,

    #[error("degenerate series: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, SpiderError>;
