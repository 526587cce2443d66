//! Monte Carlo cross-checks of the analytic models.
//!
//! Photocounts are drawn in the linearized (bright-beam) Gaussian regime:
//! each sample is a probe/conjugate pair from the bivariate normal with the
//! requested per-sample moments. That approximation is only meaningful when
//! every populated arm carries at least [`MIN_COUNTS_PER_SAMPLE`] photons
//! per sample, which [`sample_counts`] enforces.
//!
//! # Random numbers
//!
//! All randomness comes from [`seeded_rng`]: the ChaCha20 stream generator
//! of `rand_chacha`, keyed with `SeedableRng::seed_from_u64(seed)` and
//! positioned on stream `stream`. Normal variates use the ziggurat sampler
//! of `rand_distr`. Runs are bit-identical within one build for the same
//! `(seed, stream)`; across implementations only statistical agreement is
//! expected.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{finite, positive, Error, Result};
use crate::experiment::{
    run_ramp, sensitivity_report, ProbeKind, RampConfiguration, RampMode, RampScenario,
};
use crate::quantum_noise::TwoModeMoments;
use crate::signal_chain::{noise_reading_amplitude, peak_to_snr, power_to_dbm};

/// Smallest mean photon number per sample accepted by the Gaussian sampler.
pub const MIN_COUNTS_PER_SAMPLE: f64 = 100.0;

/// Smallest series accepted by [`sample_counts`].
pub const MIN_SERIES_LENGTH: usize = 1 << 10;

/// Fewest trials [`validate_pipeline`] will run.
pub const MIN_TRIALS: usize = 10;

pub type OracleRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> OracleRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sinusoidal modulation added to the probe arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub frequency_hz: f64,
    /// Peak amplitude in counts per sample.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub modulation: Option<Modulation>,
}

impl TimeSeriesConfig {
    pub fn new(
        sample_rate_hz: f64,
        duration_s: f64,
        seed: u64,
        modulation: Option<Modulation>,
    ) -> Result<Self> {
        positive("sample rate", sample_rate_hz)?;
        positive("duration", duration_s)?;
        let cfg = Self {
            sample_rate_hz,
            duration_s,
            seed,
            modulation,
        };
        if cfg.sample_count() < MIN_SERIES_LENGTH {
            return Err(Error::InsufficientSamples {
                needed: MIN_SERIES_LENGTH,
                found: cfg.sample_count(),
            });
        }
        if let Some(m) = modulation {
            finite("modulation amplitude", m.amplitude)?;
            positive("modulation frequency", m.frequency_hz)?;
            if m.frequency_hz >= 0.5 * sample_rate_hz {
                return Err(Error::OutOfRange {
                    what: "modulation frequency (Hz)",
                    value: m.frequency_hz,
                    min: 0.0,
                    max: 0.5 * sample_rate_hz,
                });
            }
        }
        Ok(cfg)
    }

    pub fn sample_count(&self) -> usize {
        (self.sample_rate_hz * self.duration_s).round() as usize
    }
}

/// Aligned probe and conjugate count series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub sample_rate_hz: f64,
    pub probe: Vec<f64>,
    pub conjugate: Vec<f64>,
}

impl CountSeries {
    pub fn len(&self) -> usize {
        self.probe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probe.is_empty()
    }

    /// `p - g c` per sample.
    pub fn difference(&self, gain: f64) -> Vec<f64> {
        self.probe
            .iter()
            .zip(&self.conjugate)
            .map(|(p, c)| p - gain * c)
            .collect()
    }

    /// Writes `time_s,probe,conjugate` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "probe", "conjugate"])?;
        for (i, (p, c)) in self.probe.iter().zip(&self.conjugate).enumerate() {
            let t = i as f64 / self.sample_rate_hz;
            w.write_record([t.to_string(), p.to_string(), c.to_string()])?;
        }
        w.flush()
    }
}

/// Cholesky factor of the per-sample count covariance.
#[derive(Debug, Clone, Copy)]
struct BivariateSampler {
    mean_p: f64,
    mean_c: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl BivariateSampler {
    fn new(m: &TwoModeMoments) -> Result<Self> {
        for (mean, var) in [(m.mean_p(), m.var_p()), (m.mean_c(), m.var_c())] {
            let empty = mean == 0.0 && var == 0.0;
            if !empty && mean < MIN_COUNTS_PER_SAMPLE {
                return Err(Error::NonGaussianRegime {
                    mean,
                    minimum: MIN_COUNTS_PER_SAMPLE,
                });
            }
        }
        if m.cov() * m.cov() > m.var_p() * m.var_c() * (1.0 + 1e-12) {
            return Err(Error::InvariantViolation(
                "covariance exceeds the Cauchy-Schwarz bound".into(),
            ));
        }
        let l11 = m.var_p().sqrt();
        let l21 = if l11 > 0.0 { m.cov() / l11 } else { 0.0 };
        let l22 = (m.var_c() - l21 * l21).max(0.0).sqrt();
        Ok(Self {
            mean_p: m.mean_p(),
            mean_c: m.mean_c(),
            l11,
            l21,
            l22,
        })
    }

    /// Zero-mean fluctuation pair.
    #[inline]
    fn fluctuation(&self, rng: &mut OracleRng) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        (self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }

    #[inline]
    fn sample(&self, rng: &mut OracleRng) -> (f64, f64) {
        let (dp, dc) = self.fluctuation(rng);
        (self.mean_p + dp, self.mean_c + dc)
    }
}

/// Draws count pairs whose per-sample moments are `m`.
///
/// `m` must already describe one sample period; rescale window moments with
/// [`TwoModeMoments::scaled`]. The optional modulation adds
/// `amplitude * cos(2 pi f t)` to the probe.
pub fn sample_counts(m: &TwoModeMoments, cfg: &TimeSeriesConfig) -> Result<CountSeries> {
    let sampler = BivariateSampler::new(m)?;
    let mut rng = seeded_rng(cfg.seed, 0);
    let n = cfg.sample_count();
    let mut probe = Vec::with_capacity(n);
    let mut conjugate = Vec::with_capacity(n);
    for i in 0..n {
        let (mut p, c) = sampler.sample(&mut rng);
        if let Some(md) = cfg.modulation {
            let t = i as f64 / cfg.sample_rate_hz;
            p += md.amplitude * (std::f64::consts::TAU * md.frequency_hz * t).cos();
        }
        probe.push(p);
        conjugate.push(c);
    }
    Ok(CountSeries {
        sample_rate_hz: cfg.sample_rate_hz,
        probe,
        conjugate,
    })
}

/// Sample moments of a count series (unbiased variances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMoments {
    pub samples: usize,
    pub mean_p: f64,
    pub mean_c: f64,
    pub var_p: f64,
    pub var_c: f64,
    pub cov: f64,
}

impl EmpiricalMoments {
    pub fn from_series(series: &CountSeries) -> Result<Self> {
        let n = series.len();
        if n < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                found: n,
            });
        }
        let nf = n as f64;
        let mean_p = series.probe.iter().sum::<f64>() / nf;
        let mean_c = series.conjugate.iter().sum::<f64>() / nf;
        let (mut vp, mut vc, mut cv) = (0.0, 0.0, 0.0);
        for (p, c) in series.probe.iter().zip(&series.conjugate) {
            let (dp, dc) = (p - mean_p, c - mean_c);
            vp += dp * dp;
            vc += dc * dc;
            cv += dp * dc;
        }
        Ok(Self {
            samples: n,
            mean_p,
            mean_c,
            var_p: vp / (nf - 1.0),
            var_c: vc / (nf - 1.0),
            cov: cv / (nf - 1.0),
        })
    }

    pub fn fano_p(&self) -> f64 {
        self.var_p / self.mean_p
    }

    /// Empirical `Var(p - g c) / (<p> + g^2 <c>)`.
    pub fn difference_noise_ratio(&self, gain: f64) -> f64 {
        (self.var_p + gain * gain * self.var_c - 2.0 * gain * self.cov)
            / (self.mean_p + gain * gain * self.mean_c)
    }
}

/// Averaging applied across periodogram segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Arithmetic mean of power per bin.
    Power,
    /// Mean of the per-bin dB values, reported back in linear power.
    Log,
}

/// One-sided power spectral density in counts^2 per Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub frequencies_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub mode: AveragingMode,
    pub segments: usize,
    pub segment_length: usize,
}

impl SpectralEstimate {
    pub fn bin_width_hz(&self) -> f64 {
        self.frequencies_hz[1] - self.frequencies_hz[0]
    }

    /// `sum P_k * df`, which for power averaging equals the series variance.
    pub fn integral(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width_hz()
    }

    pub fn peak_frequency_hz(&self, skip_dc: bool) -> f64 {
        let start = usize::from(skip_dc);
        let (idx, _) = self.power[start..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        self.frequencies_hz[idx + start]
    }

    /// Mean density over bins `1..len-1` (DC and Nyquist excluded).
    pub fn mean_interior_level(&self) -> f64 {
        let interior = &self.power[1..self.power.len() - 1];
        interior.iter().sum::<f64>() / interior.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frequency_hz", "power_per_hz"])?;
        for (f, p) in self.frequencies_hz.iter().zip(&self.power) {
            w.write_record([f.to_string(), p.to_string()])?;
        }
        w.flush()
    }
}

/// Averaged periodogram over non-overlapping, unwindowed segments.
///
/// The series mean is removed first. Each segment contributes
/// `c_k |X_k|^2 / (fs L)` per one-sided bin, with `c_k = 2` except at DC and
/// (for even `L`) Nyquist. Trailing samples that do not fill a segment are
/// dropped.
pub fn estimate_spectrum(
    series: &[f64],
    sample_rate_hz: f64,
    segment_length: usize,
    mode: AveragingMode,
) -> Result<SpectralEstimate> {
    positive("sample rate", sample_rate_hz)?;
    if segment_length < 2 || segment_length > series.len() {
        return Err(Error::InvalidParameter {
            name: "segment length",
            reason: format!(
                "must lie in [2, {}] for this series, got {segment_length}",
                series.len()
            ),
        });
    }
    let segments = series.len() / segment_length;
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let bins = segment_length / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_length);
    let norm = 1.0 / (sample_rate_hz * segment_length as f64);

    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
    for seg in series.chunks_exact(segment_length) {
        for (b, x) in buf.iter_mut().zip(seg) {
            *b = Complex64::new(x - mean, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let one_sided = if k == 0 || (segment_length.is_multiple_of(2) && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            let p = one_sided * buf[k].norm_sqr() * norm;
            *a += match mode {
                AveragingMode::Power => p,
                AveragingMode::Log => 10.0 * p.max(f64::MIN_POSITIVE).log10(),
            };
        }
    }
    let power = acc
        .into_iter()
        .map(|a| {
            let avg = a / segments as f64;
            match mode {
                AveragingMode::Power => avg,
                AveragingMode::Log => 10f64.powf(avg / 10.0),
            }
        })
        .collect();
    let df = sample_rate_hz / segment_length as f64;
    Ok(SpectralEstimate {
        frequencies_hz: (0..bins).map(|k| k as f64 * df).collect(),
        power,
        mode,
        segments,
        segment_length,
    })
}

/// Empirical versus analytic difference-noise ratio at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceNoiseCheck {
    pub gain: f64,
    pub samples: usize,
    pub empirical_ratio: f64,
    pub analytic_ratio: f64,
    pub standard_error: f64,
}

impl DifferenceNoiseCheck {
    /// Deviation in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.empirical_ratio - self.analytic_ratio) / self.standard_error
    }

    pub fn passes(&self, k_sigma: f64) -> bool {
        self.z_score().abs() <= k_sigma
    }
}

/// Streams `samples` pairs and compares `Var(p - g c) / (<p> + g^2 <c>)`
/// with the analytic value. The standard error uses the Gaussian variance
/// estimator spread `sqrt(2 / (n - 1))`.
pub fn check_difference_noise(
    m: &TwoModeMoments,
    gain: f64,
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<DifferenceNoiseCheck> {
    if samples < MIN_SERIES_LENGTH {
        return Err(Error::InsufficientSamples {
            needed: MIN_SERIES_LENGTH,
            found: samples,
        });
    }
    let sampler = BivariateSampler::new(m)?;
    let mut rng = seeded_rng(seed, stream);
    // Welford accumulators for d = p - g c and for the probe/conjugate means.
    let (mut mean_d, mut m2_d) = (0.0, 0.0);
    let (mut sum_p, mut sum_c) = (0.0, 0.0);
    for i in 0..samples {
        let (p, c) = sampler.sample(&mut rng);
        sum_p += p;
        sum_c += c;
        let d = p - gain * c;
        let delta = d - mean_d;
        mean_d += delta / (i + 1) as f64;
        m2_d += delta * (d - mean_d);
    }
    let n = samples as f64;
    let var_d = m2_d / (n - 1.0);
    let snl = sum_p / n + gain * gain * sum_c / n;
    let analytic = crate::quantum_noise::differential_noise(
        m,
        &crate::quantum_noise::DifferentialDetector::new(gain)?,
    )
    .ratio();
    Ok(DifferenceNoiseCheck {
        gain,
        samples,
        empirical_ratio: var_d / snl,
        analytic_ratio: analytic,
        standard_error: analytic * (2.0 / (n - 1.0)).sqrt(),
    })
}

/// Simulated analyzer readings for one detection configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatedTrace {
    /// SNR amplitude per requested signal amplitude (zero when not above the floor).
    pub snr_amplitudes: Vec<f64>,
    /// SNR amplitudes assigned to the noise-only readings.
    pub noise_amplitudes: Vec<f64>,
    /// Mean noise-only power, used as the floor reference.
    pub floor_power: f64,
}

/// Emulates averaged spectrum-analyzer readings at the drive frequency.
///
/// Each reading averages `n_avg` power samples `|s + w_k|^2`, where
/// `s = a / sqrt(2)` is the RMS signal phasor and `w_k` a complex noise
/// phasor assembled from two consecutive sampled differential fluctuations
/// `(p - <p>) - g (c - <c>)` scaled to power `V / N`. The floor reference is
/// the mean of the noise-only readings, and all readings pass through
/// [`peak_to_snr`] exactly as measured data would.
pub fn emulate_analyzer(
    m: &TwoModeMoments,
    gain: f64,
    signal_amplitudes: &[f64],
    noise_readings: usize,
    n_avg: usize,
    noise_bias_db: f64,
    rng: &mut OracleRng,
) -> Result<EmulatedTrace> {
    if n_avg == 0 {
        return Err(Error::InvalidParameter {
            name: "averages",
            reason: "at least one average is required".into(),
        });
    }
    if noise_readings < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: noise_readings,
        });
    }
    let sampler = BivariateSampler::new(m)?;
    let scale = 1.0 / (2.0 * n_avg as f64).sqrt();
    let mut reading = |amplitude: f64| {
        let s = amplitude / std::f64::consts::SQRT_2;
        let mut acc = 0.0;
        for _ in 0..n_avg {
            let (p1, c1) = sampler.fluctuation(rng);
            let (p2, c2) = sampler.fluctuation(rng);
            let re = s + (p1 - gain * c1) * scale;
            let im = (p2 - gain * c2) * scale;
            acc += re * re + im * im;
        }
        acc / n_avg as f64
    };

    let noise: Vec<f64> = (0..noise_readings).map(|_| reading(0.0)).collect();
    let signal: Vec<f64> = signal_amplitudes.iter().map(|&a| reading(a)).collect();
    let floor_power = noise.iter().sum::<f64>() / noise.len() as f64;
    let floor_dbm = power_to_dbm(floor_power);
    let to_amplitude = |p: f64| {
        peak_to_snr(power_to_dbm(p), floor_dbm, noise_bias_db)
            .map(|s| s.amplitude())
            .unwrap_or(0.0)
    };
    Ok(EmulatedTrace {
        snr_amplitudes: signal.into_iter().map(to_amplitude).collect(),
        noise_amplitudes: noise
            .into_iter()
            .map(|p| noise_reading_amplitude(power_to_dbm(p), floor_dbm, noise_bias_db))
            .collect(),
        floor_power,
    })
}

/// Whether stochastic trials sample noise or replay the expected readings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseInjection {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationValidation {
    pub label: String,
    pub kind: ProbeKind,
    pub deterministic_dn_per_rthz: f64,
    pub trial_dn_per_rthz: Vec<f64>,
    /// Mean of trial / deterministic.
    pub mean_ratio: f64,
    /// Normal-approximation 95% interval on `mean_ratio`.
    pub ratio_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineValidation {
    pub trials: usize,
    pub seed: u64,
    pub noise: NoiseInjection,
    pub configurations: Vec<ConfigurationValidation>,
    /// `sqrt(1/R) - 1` with `R` the twin/matched-coherent noise ratio.
    pub analytic_enhancement: Option<f64>,
    /// Enhancement computed from the trial-mean sensitivities.
    pub empirical_enhancement: Option<f64>,
}

impl PipelineValidation {
    pub fn configuration(&self, kind: ProbeKind) -> Option<&ConfigurationValidation> {
        self.configurations.iter().find(|c| c.kind == kind)
    }
}

/// Repeats the ramp analysis on emulated readings and compares the
/// extracted sensitivities with the deterministic prediction.
///
/// Trial `i` uses `RampMode::Stochastic { seed, trial: i }`, so trials are
/// independent and may run in any order.
pub fn validate_pipeline(
    scenario: &RampScenario,
    configs: &[RampConfiguration],
    confidence: f64,
    trials: usize,
    seed: u64,
    noise: NoiseInjection,
) -> Result<PipelineValidation> {
    if trials < MIN_TRIALS {
        return Err(Error::InsufficientTrials {
            trials,
            minimum: MIN_TRIALS,
        });
    }
    let deterministic_ramp = run_ramp(scenario, configs, RampMode::Deterministic)?;
    let deterministic = sensitivity_report(&deterministic_ramp, confidence)?;

    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mode = match noise {
                NoiseInjection::On => RampMode::Stochastic { seed, trial },
                NoiseInjection::Off => RampMode::Deterministic,
            };
            let ramp = run_ramp(scenario, configs, mode)?;
            let report = sensitivity_report(&ramp, confidence)?;
            Ok(report
                .configurations
                .iter()
                .map(|c| c.extraction.dn_min_per_rthz)
                .collect())
        })
        .collect::<Result<_>>()?;

    let configurations: Vec<ConfigurationValidation> = deterministic
        .configurations
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let reference = det.extraction.dn_min_per_rthz;
            let dn: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let ratios: Vec<f64> = dn.iter().map(|d| d / reference).collect();
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let half = 1.96 * sd / n.sqrt();
            ConfigurationValidation {
                label: det.label.clone(),
                kind: det.kind,
                deterministic_dn_per_rthz: reference,
                trial_dn_per_rthz: dn,
                mean_ratio: mean,
                ratio_ci: (mean - half, mean + half),
            }
        })
        .collect();

    let twin_trace = deterministic_ramp.trace(ProbeKind::TwinBeams);
    let analytic_enhancement = twin_trace
        .filter(|_| {
            deterministic_ramp
                .trace(ProbeKind::MatchedCoherent)
                .is_some()
        })
        .map(|t| (1.0 / t.noise.ratio()).sqrt() - 1.0);
    let mean_dn = |kind: ProbeKind| {
        configurations
            .iter()
            .find(|c| c.kind == kind)
            .map(|c| c.trial_dn_per_rthz.iter().sum::<f64>() / c.trial_dn_per_rthz.len() as f64)
    };
    let empirical_enhancement = match (
        mean_dn(ProbeKind::MatchedCoherent),
        mean_dn(ProbeKind::TwinBeams),
    ) {
        (Some(c), Some(q)) => Some(crate::experiment::enhancement(c, q)?),
        _ => None,
    };

    Ok(PipelineValidation {
        trials,
        seed,
        noise,
        configurations,
        analytic_enhancement,
        empirical_enhancement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_noise::{apply_loss, LossChannel, SqueezingLevel, TwinBeamSource};

    fn coherent(mean: f64) -> TwoModeMoments {
        TwoModeMoments::coherent(mean, mean).unwrap()
    }

    fn twin_9db(mean_seed: f64) -> TwoModeMoments {
        TwinBeamSource::from_squeezing(SqueezingLevel::from_db(9.0).unwrap(), mean_seed)
            .unwrap()
            .moments(1.0)
            .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TimeSeriesConfig::new(1000.0, 1.0, 1, None).is_err());
        assert!(TimeSeriesConfig::new(1024.0, 1.0, 1, None).is_ok());
        let tone = Modulation {
            frequency_hz: 600.0,
            amplitude: 1.0,
        };
        assert!(TimeSeriesConfig::new(1024.0, 1.0, 1, Some(tone)).is_err());
    }

    #[test]
    fn regime_guard() {
        let dim = TwoModeMoments::coherent(50.0, 1e4).unwrap();
        let cfg = TimeSeriesConfig::new(2048.0, 1.0, 7, None).unwrap();
        assert!(matches!(
            sample_counts(&dim, &cfg),
            Err(Error::NonGaussianRegime { .. })
        ));
        // An empty conjugate arm is allowed.
        let probe_only = TwoModeMoments::coherent(1e4, 0.0).unwrap();
        assert!(sample_counts(&probe_only, &cfg).is_ok());
    }

    #[test]
    fn seeded_series_are_reproducible() {
        let cfg = TimeSeriesConfig::new(4096.0, 1.0, 42, None).unwrap();
        let a = sample_counts(&coherent(1e6), &cfg).unwrap();
        let b = sample_counts(&coherent(1e6), &cfg).unwrap();
        assert_eq!(a, b);
        let other = TimeSeriesConfig { seed: 43, ..cfg };
        assert_ne!(a, sample_counts(&coherent(1e6), &other).unwrap());
    }

    #[test]
    fn coherent_fano_is_one() {
        let n = 1_000_000;
        let cfg = TimeSeriesConfig::new(n as f64, 1.0, 11, None).unwrap();
        let s = sample_counts(&coherent(1e6), &cfg).unwrap();
        let e = EmpiricalMoments::from_series(&s).unwrap();
        let se = (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((e.fano_p() - 1.0).abs() < 3.0 * se, "Fano {}", e.fano_p());
    }

    #[test]
    fn twin_difference_ratio_converges() {
        let check = check_difference_noise(&twin_9db(1e6), 1.0, 1_000_000, 5, 0).unwrap();
        assert!((check.analytic_ratio - 0.1259).abs() < 1e-4);
        assert!(check.passes(3.0), "z = {}", check.z_score());
    }

    #[test]
    fn moment_error_shrinks_with_sample_count() {
        // RMS error of the probe Fano estimate over repeated runs at two sizes.
        let m = twin_9db(1e5);
        let rms_error = |n: usize| {
            let errs: Vec<f64> = (0..40)
                .map(|k| {
                    let cfg = TimeSeriesConfig::new(n as f64, 1.0, 1000 + k, None).unwrap();
                    let e =
                        EmpiricalMoments::from_series(&sample_counts(&m, &cfg).unwrap()).unwrap();
                    (e.var_p / m.var_p() - 1.0).powi(2)
                })
                .collect();
            (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
        };
        let small = rms_error(4096);
        let large = rms_error(65536);
        // Expected ratio sqrt(16) = 4.
        let ratio = small / large;
        assert!(ratio > 2.8 && ratio < 5.6, "ratio {ratio}");
    }

    #[test]
    fn white_noise_spectrum_is_flat_at_shot_noise_density() {
        let fs = 1024.0;
        let n = 256 * 200;
        let cfg = TimeSeriesConfig::new(fs, n as f64 / fs, 3, None).unwrap();
        let s = sample_counts(&TwoModeMoments::coherent(1e6, 0.0).unwrap(), &cfg).unwrap();
        let spec = estimate_spectrum(&s.probe, fs, 256, AveragingMode::Power).unwrap();
        assert_eq!(spec.segments, 200);
        // One-sided density of white noise with variance sigma^2: 2 sigma^2 / fs.
        let analytic = 2.0 * 1e6 / fs;
        let level = spec.mean_interior_level();
        assert!(
            (level / analytic - 1.0).abs() < 0.02,
            "level {level} vs {analytic}"
        );
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let fs = 1024.0;
        let tone = Modulation {
            frequency_hz: 200.0,
            amplitude: 500.0,
        };
        let cfg = TimeSeriesConfig::new(fs, 16.0, 9, Some(tone)).unwrap();
        let s = sample_counts(&TwoModeMoments::coherent(1e4, 0.0).unwrap(), &cfg).unwrap();
        let spec = estimate_spectrum(&s.probe, fs, 512, AveragingMode::Power).unwrap();
        assert_eq!(spec.peak_frequency_hz(true), 200.0);
    }

    #[test]
    fn parseval_holds_for_power_average() {
        let fs = 2048.0;
        let cfg = TimeSeriesConfig::new(fs, 64.0, 21, None).unwrap();
        let s = sample_counts(&twin_9db(1e5), &cfg).unwrap();
        let d = s.difference(1.0);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
        let spec = estimate_spectrum(&d, fs, 1024, AveragingMode::Power).unwrap();
        assert!((spec.integral() / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn log_averaging_reads_low() {
        let fs = 1024.0;
        let cfg = TimeSeriesConfig::new(fs, 200.0, 4, None).unwrap();
        let s = sample_counts(&TwoModeMoments::coherent(1e6, 0.0).unwrap(), &cfg).unwrap();
        let pow = estimate_spectrum(&s.probe, fs, 256, AveragingMode::Power).unwrap();
        let log = estimate_spectrum(&s.probe, fs, 256, AveragingMode::Log).unwrap();
        let bias_db = 10.0 * (pow.mean_interior_level() / log.mean_interior_level()).log10();
        // For exponentially distributed bin powers the bias is 10 gamma / ln 10 = 2.507 dB.
        assert!(bias_db > 0.0);
        assert!((bias_db - 2.507).abs() < 0.15, "bias {bias_db} dB");
    }

    #[test]
    fn spectrum_rejects_bad_segments() {
        let x = vec![0.0; 100];
        assert!(estimate_spectrum(&x, 1.0, 1, AveragingMode::Power).is_err());
        assert!(estimate_spectrum(&x, 1.0, 101, AveragingMode::Power).is_err());
    }

    #[test]
    fn emulated_noise_amplitudes_match_analytic_statistics() {
        let m = apply_loss(
            &twin_9db(1e9),
            &LossChannel::new(0.5).unwrap(),
            &LossChannel::new(0.9).unwrap(),
        );
        let mut rng = seeded_rng(77, 0);
        let trace = emulate_analyzer(&m, 0.7, &[], 4000, 50, 0.0, &mut rng).unwrap();
        let emp = crate::signal_chain::NoiseStats::from_samples(&trace.noise_amplitudes).unwrap();
        let ana = crate::signal_chain::noise_floor_statistics(50.0, 0.0).unwrap();
        assert!(
            (emp.mean / ana.mean - 1.0).abs() < 0.05,
            "{emp:?} vs {ana:?}"
        );
        assert!(
            (emp.std_dev / ana.std_dev - 1.0).abs() < 0.05,
            "{emp:?} vs {ana:?}"
        );
    }

    #[test]
    fn emulated_floor_matches_averaged_variance() {
        let m = TwoModeMoments::coherent(1e8, 1e8).unwrap();
        let mut rng = seeded_rng(1, 0);
        let trace = emulate_analyzer(&m, 1.0, &[], 400, 100, 0.0, &mut rng).unwrap();
        let expected = 2e8 / 100.0;
        assert!((trace.floor_power / expected - 1.0).abs() < 0.01);
    }
}
