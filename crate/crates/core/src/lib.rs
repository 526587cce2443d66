//! Simulation toolkit for twin-beam, sub-shot-noise plasmonic refractive-index
//! sensing.
//!
//! The crate is organised along the measurement chain:
//!
//! - [`quantum_noise`]: photon-counting moments of twin beams, loss channels,
//!   gain-optimised differential detection and shot-noise referencing.
//! - [`plasmonic`]: transmission spectra, spectral dispersion and the
//!   refractive-index to intensity transduction of a nanohole-array sensor.
//! - [`signal_chain`]: spectrum-analyzer averaging, detection windows and
//!   signal-plus-noise SNR conversion.
//! - [`experiment`]: chamber calibration, voltage ramps, minimum detectable
//!   index change and enhancement figures.
//! - [`oracle`]: Monte Carlo count series, averaged periodograms and
//!   end-to-end cross-checks of the analytic results.
//!
//! All models are pure functions over immutable values. Randomness only
//! appears in [`oracle`] and always flows from an explicit seed.

pub mod constants;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod plasmonic;
pub mod quantum_noise;
pub mod signal_chain;

pub use error::{Error, Result};
