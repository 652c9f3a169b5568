use thiserror::Error;

/// Failures shared by every simulator in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside the domain of the {chart} chart: {reason}")]
    OutsideChart { chart: &'static str, reason: String },

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input/output: {0}")]
    Io(String),

    /// The reader of the output went away (a closed pipe).
    #[error("output closed")]
    ClosedOutput,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn outside(chart: &'static str, reason: impl Into<String>) -> Error {
    Error::OutsideChart {
        chart,
        reason: reason.into(),
    }
}
