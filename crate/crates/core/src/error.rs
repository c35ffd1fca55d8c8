use alloc::string::String;

use crate::wss::{Band, PortId};

/// Errors raised by the model, the oracle and the estimator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("spectrum has no power inside its support")]
    EmptySpectrum,

    #[error("frequency {frequency_thz} THz is off the 100 GHz grid (residual {residual_ghz:.3} GHz)")]
    OffGrid {
        frequency_thz: f64,
        residual_ghz: f64,
    },

    #[error("channel {channel} outside the allowed range [{min}, {max}]")]
    ChannelOutOfRange { channel: i32, min: i32, max: i32 },

    #[error("port {0} is not declared in the switch plan")]
    UnknownPort(PortId),

    #[error("band {0} has no grid in the switch plan")]
    UnknownBand(Band),

    #[error("switch plan is invalid: {0}")]
    InvalidPlan(String),

    #[error("routing probabilities violate their invariants: {0}")]
    Invariant(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit did not converge after {iterations} iterations (chi-square {chi_square:.6e}): {reason}")]
    FitFailed {
        iterations: usize,
        chi_square: f64,
        reason: String,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Rejects NaN and values outside `[lo, hi]`.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
    if value.is_nan() || value < lo || value > hi {
        return Err(invalid(
            name,
            alloc::format!("{value} not in [{lo}, {hi}]"),
        ));
    }
    Ok(value)
}
