use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "no stable equilibrium: injection {p_injection} must satisfy 0 <= p < p_max = {p_max}"
    )]
    NoEquilibrium { p_injection: f64, p_max: f64 },

    #[error("series length mismatch: time grid has {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("level value c = {c} must lie in (0, {c_max})")]
    LevelOutOfRange { c: f64, c_max: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
