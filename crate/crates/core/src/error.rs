use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("degenerate baseline: reference and source cameras share a center")]
    DegenerateBaseline,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no geometry available: no source view carries a depth map")]
    NoGeometry,
    #[error("time index {tau} out of range for {frames} frames")]
    TimeOutOfRange { tau: usize, frames: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(&'static str),
    #[error("no trainable view: {0}")]
    NoTrainableView(&'static str),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("invalid scene: {0}")]
    InvalidScene(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
