use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },

    #[error("invalid value at index {index}: {value} (readings must be finite and non-negative)")]
    InvalidReading { index: usize, value: f64 },

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("series mismatch: {0}")]
    Mismatch(String),

    #[error("no input series")]
    Empty,

    #[error("state `{0}` has no on-windows")]
    NoOnWindows(String),

    #[error("expected {expected} device states, got {got}")]
    StateCount { expected: usize, got: usize },

    #[error("degenerate model: covariance of the state means is numerically zero")]
    DegenerateModel,

    #[error("non-finite input")]
    NonFinite,

    #[error("no projections for `{0}`")]
    NoProjections(String),

    #[error("map was built for model {map_model:016x}, got model {model:016x}")]
    ModelMismatch { map_model: u64, model: u64 },

    #[error("malformed run-length mask: {0}")]
    MalformedMask(String),
}
