use thiserror::Error;

/// Errors raised by the sensing models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("insufficient samples: need {needed}, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),

    #[error("dispersion pole: n^2 + eps_m vanishes")]
    DispersionPole,

    #[error("signal is not above the noise floor (peak - floor = {0} dB)")]
    SignalBelowNoise(f64),

    #[error("non-Gaussian regime: mean of {mean} counts per sample is below {minimum}")]
    NonGaussianRegime { mean: f64, minimum: f64 },

    #[error("fitted SNR slope {0} is not positive")]
    NonPositiveSlope(f64),

    #[error("infeasible sensitivity: {0}")]
    InfeasibleSensitivity(String),

    #[error("spectrum data: {0}")]
    SpectrumData(String),

    #[error("at least {minimum} trials are required, got {trials}")]
    InsufficientTrials { trials: usize, minimum: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {value}"),
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be non-negative, got {value}"),
        })
    }
}
