//! Physical constants (CODATA 2018 exact SI values).

/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Nanometres per metre.
pub const NM_PER_M: f64 = 1e9;

/// Millimetres per metre.
pub const MM_PER_M: f64 = 1e3;
