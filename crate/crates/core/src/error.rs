use thiserror::Error;

/// Errors produced by the detection, solver and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no stop region on the grid: {0}")]
    Structure(String),

    #[error("calibration failed after {iterations} iterations: {reason}")]
    Calibration { iterations: usize, reason: String },

    #[error("missing approximation components: {}", .0.join(", "))]
    Assembly(Vec<&'static str>),
}

pub type Result<T> = std::result::Result<T, QcdError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> QcdError {
    QcdError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
