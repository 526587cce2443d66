//! Spectrum-analyzer measurement model and SNR bookkeeping.
//!
//! Conventions used throughout:
//!
//! - A detection bandwidth `B` corresponds to an integration window
//!   `tau = 1 / (2 B)`, so a photon flux `F` yields `F tau` counts per window.
//! - Powers are expressed in counts^2. The dBm scale is anchored at
//!   [`REFERENCE_POWER`]; only differences of dBm readings carry meaning.
//! - A sinusoidal count modulation of peak amplitude `a` carries power
//!   `a^2 / 2`. This RMS factor appears once, in [`predicted_snr`].
//! - Averaging `N` times lowers the effective noise floor to `V / N`, where
//!   `V` is the per-window count variance, and narrows the scatter of each
//!   averaged floor reading to a relative standard deviation of `1/sqrt(N)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{finite, non_negative, positive, Error, Result};

/// Power (counts^2) displayed as 0 dBm.
pub const REFERENCE_POWER: f64 = 1.0;

/// Spectrum-analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSettings {
    pub center_freq_hz: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub span_hz: f64,
    pub sweep_time_s: f64,
    pub trace_averages: u32,
}

impl AnalyzerSettings {
    pub fn new(
        center_freq_hz: f64,
        rbw_hz: f64,
        vbw_hz: f64,
        span_hz: f64,
        sweep_time_s: f64,
        trace_averages: u32,
    ) -> Result<Self> {
        non_negative("center frequency", center_freq_hz)?;
        positive("RBW", rbw_hz)?;
        positive("VBW", vbw_hz)?;
        non_negative("span", span_hz)?;
        non_negative("sweep time", sweep_time_s)?;
        if trace_averages == 0 {
            return Err(Error::InvalidParameter {
                name: "trace averages",
                reason: "at least one trace is required".into(),
            });
        }
        let s = Self {
            center_freq_hz,
            rbw_hz,
            vbw_hz,
            span_hz,
            sweep_time_s,
            trace_averages,
        };
        if s.effective_averages() < 1.0 {
            return Err(Error::InvalidParameter {
                name: "analyzer averaging",
                reason: format!(
                    "(RBW/VBW) x traces = {} is below one",
                    s.effective_averages()
                ),
            });
        }
        Ok(s)
    }

    /// `(RBW / VBW) * traces`.
    pub fn effective_averages(&self) -> f64 {
        effective_averages(self)
    }
}

pub fn effective_averages(s: &AnalyzerSettings) -> f64 {
    s.rbw_hz / s.vbw_hz * f64::from(s.trace_averages)
}

/// Integration window `1 / (2 B)` in seconds.
pub fn integration_window(bandwidth_hz: f64) -> Result<f64> {
    positive("detection bandwidth", bandwidth_hz)?;
    Ok(0.5 / bandwidth_hz)
}

/// Photon counts collected in the integration window of a bandwidth.
pub fn window_counts(flux: f64, bandwidth_hz: f64) -> Result<f64> {
    non_negative("photon flux", flux)?;
    Ok(flux * integration_window(bandwidth_hz)?)
}

/// Signal-to-noise ratio in dB and as a linear amplitude ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    snr_db: f64,
    snr_amplitude: f64,
}

impl SnrEstimate {
    pub fn from_db(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::INFINITY {
            return Err(Error::NonFinite {
                name: "SNR (dB)",
                value: snr_db,
            });
        }
        Ok(Self {
            snr_db,
            snr_amplitude: snr_amplitude(snr_db),
        })
    }

    /// `amplitude = 0` maps to `-inf` dB.
    pub fn from_amplitude(amplitude: f64) -> Result<Self> {
        non_negative("SNR amplitude", amplitude)?;
        Ok(Self {
            snr_db: 20.0 * amplitude.log10(),
            snr_amplitude: amplitude,
        })
    }

    pub fn db(&self) -> f64 {
        self.snr_db
    }

    pub fn amplitude(&self) -> f64 {
        self.snr_amplitude
    }

    /// Power SNR `amplitude^2`.
    pub fn power_ratio(&self) -> f64 {
        self.snr_amplitude * self.snr_amplitude
    }
}

/// `sqrt(10^(dB/10))`.
pub fn snr_amplitude(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 20.0)
}

pub fn power_to_dbm(power: f64) -> f64 {
    10.0 * (power / REFERENCE_POWER).log10()
}

pub fn dbm_to_power(dbm: f64) -> f64 {
    REFERENCE_POWER * 10f64.powf(dbm / 10.0)
}

/// Converts a peak reading over a noise floor into the SNR of the signal
/// alone, assuming signal and noise powers add.
///
/// With `delta = peak - (floor + noise_bias_db)` the signal-only ratio is
/// `10 log10(10^(delta/10) - 1)`. `noise_bias_db` compensates a log-averaged
/// floor that reads low; use 0 for power-averaged readings.
pub fn peak_to_snr(peak_dbm: f64, floor_dbm: f64, noise_bias_db: f64) -> Result<SnrEstimate> {
    finite("peak reading", peak_dbm)?;
    finite("floor reading", floor_dbm)?;
    finite("noise bias", noise_bias_db)?;
    let delta = peak_dbm - (floor_dbm + noise_bias_db);
    if delta <= 0.0 {
        return Err(Error::SignalBelowNoise(delta));
    }
    SnrEstimate::from_db(delta - correction_factor(delta))
}

/// Amount by which `peak - floor` overstates the signal SNR, in dB.
/// Positive and strictly decreasing for `delta > 0`, vanishing as `delta` grows.
pub fn correction_factor(delta_db: f64) -> f64 {
    let x = -delta_db * std::f64::consts::LN_10 / 10.0;
    -10.0 * (-x.exp_m1()).log10()
}

/// SNR of a sinusoidal count modulation of peak amplitude `signal_amplitude`
/// over a noise of per-window variance `noise_variance`, averaged `n_avg`
/// times: `(a / sqrt(2 V)) sqrt(N)`.
pub fn predicted_snr(
    signal_amplitude: f64,
    noise_variance: f64,
    n_avg: f64,
) -> Result<SnrEstimate> {
    non_negative("signal amplitude", signal_amplitude)?;
    positive("noise variance", noise_variance)?;
    check_averages(n_avg)?;
    SnrEstimate::from_amplitude(signal_amplitude / (2.0 * noise_variance).sqrt() * n_avg.sqrt())
}

fn check_averages(n_avg: f64) -> Result<f64> {
    finite("averages", n_avg)?;
    if n_avg < 1.0 {
        return Err(Error::InvalidParameter {
            name: "averages",
            reason: format!("must be >= 1, got {n_avg}"),
        });
    }
    Ok(n_avg)
}

/// Expected analyzer powers for a modulation over averaged noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerReading {
    /// Averaged noise floor `V / N`.
    pub floor_power: f64,
    /// Floor plus signal power `a^2 / 2`.
    pub peak_power: f64,
}

impl AnalyzerReading {
    pub fn floor_dbm(&self) -> f64 {
        power_to_dbm(self.floor_power)
    }

    pub fn peak_dbm(&self) -> f64 {
        power_to_dbm(self.peak_power)
    }
}

pub fn predicted_reading(
    signal_amplitude: f64,
    noise_variance: f64,
    n_avg: f64,
) -> Result<AnalyzerReading> {
    non_negative("signal amplitude", signal_amplitude)?;
    positive("noise variance", noise_variance)?;
    check_averages(n_avg)?;
    let floor_power = noise_variance / n_avg;
    Ok(AnalyzerReading {
        floor_power,
        peak_power: floor_power + 0.5 * signal_amplitude * signal_amplitude,
    })
}

/// Location and spread of the SNR amplitudes assigned to noise-only readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub mean: f64,
    pub std_dev: f64,
    /// Number of readings behind an empirical estimate; `None` when analytic.
    pub samples: Option<usize>,
}

impl NoiseStats {
    /// Sample mean and (n - 1) standard deviation.
    pub fn from_samples(amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                found: amplitudes.len(),
            });
        }
        let n = amplitudes.len() as f64;
        let mean = amplitudes.iter().sum::<f64>() / n;
        let var = amplitudes.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            std_dev: var.sqrt(),
            samples: Some(amplitudes.len()),
        })
    }

    /// `mean + z(confidence) std`, with `z` the one-sided Gaussian quantile.
    pub fn threshold(&self, confidence: f64) -> Result<f64> {
        Ok(self.mean + confidence_quantile(confidence)? * self.std_dev)
    }
}

/// One-sided standard-normal quantile for `confidence` in `(0.5, 1)`.
pub fn confidence_quantile(confidence: f64) -> Result<f64> {
    finite("confidence", confidence)?;
    if !(confidence > 0.5 && confidence < 1.0) {
        return Err(Error::OutOfRange {
            what: "confidence",
            value: confidence,
            min: 0.5,
            max: 1.0,
        });
    }
    let std_normal = Normal::standard();
    Ok(std_normal.inverse_cdf(confidence))
}

/// Noise-only SNR amplitude assigned by the analysis to one floor reading:
/// the reading is pushed through [`peak_to_snr`] against the floor level, and
/// readings that do not exceed it count as zero.
pub fn noise_reading_amplitude(reading_dbm: f64, floor_dbm: f64, noise_bias_db: f64) -> f64 {
    peak_to_snr(reading_dbm, floor_dbm, noise_bias_db)
        .map(|s| s.amplitude())
        .unwrap_or(0.0)
}

/// Analytic [`NoiseStats`] for floor readings that average `n_avg`
/// exponentially distributed power samples.
///
/// Relative to its mean such a reading `X` is Gamma distributed with shape
/// and rate `N`. The noise-only amplitude is `sqrt(X / b - 1)` for `X > b`
/// and zero otherwise, where `b = 10^(bias/10)`. Its first two moments are
/// integrated numerically in `u = sqrt(X / b - 1)`.
pub fn noise_floor_statistics(n_avg: f64, noise_bias_db: f64) -> Result<NoiseStats> {
    check_averages(n_avg)?;
    finite("noise bias", noise_bias_db)?;
    let k = n_avg;
    let b = 10f64.powf(noise_bias_db / 10.0);
    let ln_norm = k * k.ln() - ln_gamma(k);
    let density = |x: f64| (ln_norm + (k - 1.0) * x.ln() - k * x).exp();

    let x_max = 1.0 + 40.0 / k.sqrt() + 40.0 / k;
    if x_max <= b {
        return Ok(NoiseStats {
            mean: 0.0,
            std_dev: 0.0,
            samples: None,
        });
    }
    let u_max = (x_max / b - 1.0).sqrt();
    let m1 = simpson(
        |u| 2.0 * b * u * u * density(b * (1.0 + u * u)),
        0.0,
        u_max,
        20_000,
    );
    let m2 = simpson(
        |u| 2.0 * b * u * u * u * density(b * (1.0 + u * u)),
        0.0,
        u_max,
        20_000,
    );
    Ok(NoiseStats {
        mean: m1,
        std_dev: (m2 - m1 * m1).max(0.0).sqrt(),
        samples: None,
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let interior: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    (f(a) + f(b) + interior) * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma_ur;

    fn analyzer(rbw: f64, vbw: f64, traces: u32) -> AnalyzerSettings {
        AnalyzerSettings::new(199e3, rbw, vbw, 0.0, 10.0, traces).unwrap()
    }

    #[test]
    fn averaging_counts() {
        assert_eq!(analyzer(100.0, 10.0, 50).effective_averages(), 500.0);
        assert_eq!(analyzer(10.0, 10.0, 1).effective_averages(), 1.0);
        assert_eq!(analyzer(10.0, 1.0, 50).effective_averages(), 500.0);
        assert!(AnalyzerSettings::new(0.0, 1.0, 10.0, 0.0, 1.0, 1).is_err());
        assert!(AnalyzerSettings::new(0.0, 1.0, 1.0, 0.0, 1.0, 0).is_err());
        assert!(AnalyzerSettings::new(0.0, 0.0, 1.0, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn counts_per_window() {
        let c = window_counts(2.8e14, 1.0).unwrap();
        assert_relative_eq!(c, 1.4e14, max_relative = 1e-15);
        assert!((c - 1.5e14).abs() / 1.5e14 < 0.07);
        assert_eq!(window_counts(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            window_counts(2.8e14, 100.0).unwrap(),
            1.4e12,
            max_relative = 1e-15
        );
        assert!(window_counts(1.0, 0.0).is_err());
    }

    #[test]
    fn peak_to_snr_examples() {
        let s = peak_to_snr(-40.0 + 10.0 * 2f64.log10(), -40.0, 0.0).unwrap();
        assert!(s.db().abs() < 1e-9);
        assert_relative_eq!(s.amplitude(), 1.0, max_relative = 1e-9);

        let s = peak_to_snr(10.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(s.db(), 10.0 * 9f64.log10(), max_relative = 1e-12);
        assert!((s.db() - 9.542).abs() < 5e-4);
        assert_relative_eq!(s.amplitude(), 3.0, max_relative = 1e-12);

        let s = peak_to_snr(200.0, 0.0, 0.0).unwrap();
        assert!((s.db() - 200.0).abs() < 1e-12);
        assert!(correction_factor(200.0) < 1e-12);

        assert!(matches!(
            peak_to_snr(0.0, 0.0, 0.0),
            Err(Error::SignalBelowNoise(_))
        ));
        assert!(peak_to_snr(-1.0, 0.0, 0.0).is_err());
        // A 2.5 dB bias raises the floor.
        assert!(peak_to_snr(2.0, 0.0, 2.5).is_err());
        let biased = peak_to_snr(12.5, 0.0, 2.5).unwrap();
        assert_relative_eq!(biased.amplitude(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn amplitude_conversion() {
        assert_eq!(snr_amplitude(0.0), 1.0);
        assert_relative_eq!(snr_amplitude(20.0), 10.0, max_relative = 1e-15);
        assert!((snr_amplitude(9.542) - 3.0).abs() < 2e-4);
        let s = SnrEstimate::from_amplitude(0.0).unwrap();
        assert_eq!(s.db(), f64::NEG_INFINITY);
        assert!(SnrEstimate::from_amplitude(-1.0).is_err());
        assert!(SnrEstimate::from_db(f64::NAN).is_err());
    }

    #[test]
    fn predicted_snr_scaling() {
        assert_eq!(predicted_snr(0.0, 1e6, 500.0).unwrap().amplitude(), 0.0);
        let one = predicted_snr(1e3, 1e6, 100.0).unwrap().amplitude();
        let four = predicted_snr(1e3, 1e6, 400.0).unwrap().amplitude();
        assert_relative_eq!(four, 2.0 * one, max_relative = 1e-15);
        assert!(predicted_snr(1.0, 0.0, 1.0).is_err());
        assert!(predicted_snr(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn coherent_probe_reaches_unit_snr_at_rms_scaled_limit() {
        // Input counts I0 through transmission T: variance T I0, signal I0 dT/dn dn.
        let (i0, t, dt_dn, n) = (1.5e14f64, 0.66f64, 2.5f64, 500.0f64);
        let dn = (1.0 / dt_dn) * (t / i0).sqrt() / n.sqrt() * 2f64.sqrt();
        let s = predicted_snr(i0 * dt_dn * dn, t * i0, n).unwrap();
        assert_relative_eq!(s.amplitude(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn predicted_readings_round_trip() {
        let (a, v, n) = (2.5e3, 4e6, 500.0);
        let r = predicted_reading(a, v, n).unwrap();
        let back = peak_to_snr(r.peak_dbm(), r.floor_dbm(), 0.0).unwrap();
        let direct = predicted_snr(a, v, n).unwrap();
        assert_relative_eq!(back.amplitude(), direct.amplitude(), max_relative = 1e-9);
    }

    #[test]
    fn confidence_quantile_values() {
        assert!((confidence_quantile(0.99).unwrap() - 2.326).abs() < 1e-3);
        assert!(confidence_quantile(0.5).is_err());
        assert!(confidence_quantile(1.0).is_err());
    }

    #[test]
    fn noise_floor_single_average_matches_closed_form() {
        // N = 1: X ~ Exp(1), E[sqrt(X-1)+] = e^-1 Gamma(3/2), E[(X-1)+] = e^-1.
        let s = noise_floor_statistics(1.0, 0.0).unwrap();
        let m1 = (-1f64).exp() * std::f64::consts::PI.sqrt() / 2.0;
        let m2 = (-1f64).exp();
        assert_relative_eq!(s.mean, m1, max_relative = 1e-8);
        assert_relative_eq!(s.std_dev, (m2 - m1 * m1).sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn noise_floor_second_moment_matches_incomplete_gamma() {
        // E[(X/b - 1)+] = Q(k+1, k b) / b - Q(k, k b) for X ~ Gamma(k, rate k).
        for (k, bias_db) in [(500.0, 0.0), (50.0, 0.0), (500.0, 0.1), (10.0, -0.5)] {
            let s = noise_floor_statistics(k, bias_db).unwrap();
            let b = 10f64.powf(bias_db / 10.0);
            let m2 = gamma_ur(k + 1.0, k * b) / b - gamma_ur(k, k * b);
            assert_relative_eq!(
                s.std_dev * s.std_dev + s.mean * s.mean,
                m2,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn noise_floor_statistics_at_reference_averaging() {
        let s = noise_floor_statistics(500.0, 0.0).unwrap();
        // Large-N normal limit: mean ~ 0.411 N^-1/4, threshold ~ 0.32.
        assert!((s.mean - 0.411 * 500f64.powf(-0.25)).abs() < 0.01);
        let th = s.threshold(0.99).unwrap();
        assert!(th > 0.3 && th < 0.35, "threshold {th}");
    }

    #[test]
    fn sample_noise_stats() {
        let s = NoiseStats::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std_dev, s.samples), (2.0, 1.0, Some(3)));
        assert!(NoiseStats::from_samples(&[1.0]).is_err());
    }
}
