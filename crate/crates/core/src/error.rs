use thiserror::Error;

use crate::nonlinearity::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("spectrum is not Hermitian (asymmetry {asymmetry:.3e}); a complex-valued field cannot be returned as a real field")]
    NonHermitian { asymmetry: f64 },

    #[error("wavenumber k = 0 has no oscillatory branch")]
    ZeroWavenumber,

    #[error("fast-axis period {length} is not a multiple of 2π; use L_x = {required} instead")]
    Incommensurate { length: f64, required: f64 },

    #[error("nonlinearity violates the justified class: {}", format_violations(.0))]
    Nonlinearity(Vec<Violation>),

    #[error("resonant denominator {value:.3e} for harmonic (k = {k}, ω = {omega})")]
    Resonance { k: i32, omega: f64, value: f64 },

    #[error("solution blew up (non-finite values) at t = {time}")]
    BlowUp { time: f64 },

    #[error("requested time {requested} lies beyond the integrated horizon {horizon}; extend the envelope solve range")]
    Horizon { requested: f64, horizon: f64 },

    #[error("invalid parameter `{key}`: {message}")]
    Parameter { key: String, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parameter { key: key.into(), message: message.into() }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    /// True for errors caused by bad input (as opposed to a failing run).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::GridMismatch(_)
                | Error::Incommensurate { .. }
                | Error::Nonlinearity(_)
                | Error::Parameter { .. }
                | Error::Config { .. }
                | Error::ZeroWavenumber
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
