use alloc::string::String;
use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to name the
/// offending shape, sample or iteration in the message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch in {context}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        context: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("zero variance on {side} input of pearson")]
    ZeroVariance { side: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("label {label} out of range for {classes} classes (sample index {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("feature outside [0, 1] at sample index {index}")]
    FeatureOutOfRange { index: usize },

    #[error("not enough samples for {context}: needed {needed}, available {available}")]
    InsufficientSamples {
        context: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("sample id sets do not match in {context}")]
    IdMismatch { context: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }
}
