//! Ramp experiments, sensitivity extraction and the analytic budget.
//!
//! A [`RampScenario`] holds everything needed to predict the analyzer
//! response while the index change is ramped: the source, the optics on
//! either arm, the sensor, the analyzer and the drive schedule. The
//! scenario's `post_sensor_power_w` is the probe power *after* the sensor
//! (the quantity that is held fixed in the lab), so the counts incident on
//! the sensor are the post-sensor counts divided by `T`.

use serde::{Deserialize, Serialize};

use crate::constants::{MM_PER_M, NM_PER_M, PLANCK, SPEED_OF_LIGHT};
use crate::error::{finite, non_negative, positive, Error, Result};
use crate::oracle::{emulate_analyzer, seeded_rng};
use crate::plasmonic::{
    sensor_response, transduce, MetalPermittivity, NanoholeGeometry, SensorResponse,
    TransmissionSpectrum, DEFAULT_SLOPE_WINDOW_NM,
};
use crate::quantum_noise::{
    apply_loss, differential_noise, linear_to_db, optimize_gain, DifferentialDetector,
    DifferentialNoise, LossChannel, SqueezingLevel, TwinBeamSource, TwoModeMoments,
};
use crate::signal_chain::{
    noise_floor_statistics, predicted_snr, window_counts, AnalyzerSettings, NoiseStats,
};

/// Default confidence of the detection threshold.
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Fewest above-threshold points [`fit_and_extract`] will fit.
pub const MIN_FIT_POINTS: usize = 5;

/// Index changes of the two demonstration modulations.
pub const DEMO_LARGE_DN: f64 = 1.6e-7;
pub const DEMO_SMALL_DN: f64 = 8.2e-9;

/// Interferometric calibration of the index modulation against drive voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChamberCalibration {
    pub wavelength_nm: f64,
    pub path_length_mm: f64,
    /// Fringe scan amplitude `A` in volts.
    pub scan_amplitude_v: f64,
    /// Modulation amplitude `B` per drive volt.
    pub modulation_v_per_drive_v: f64,
}

impl ChamberCalibration {
    pub fn new(
        wavelength_nm: f64,
        path_length_mm: f64,
        scan_amplitude_v: f64,
        modulation_v_per_drive_v: f64,
    ) -> Result<Self> {
        positive("calibration wavelength", wavelength_nm)?;
        positive("path length", path_length_mm)?;
        positive("scan amplitude", scan_amplitude_v)?;
        positive("modulation per drive volt", modulation_v_per_drive_v)?;
        Ok(Self {
            wavelength_nm,
            path_length_mm,
            scan_amplitude_v,
            modulation_v_per_drive_v,
        })
    }

    /// `lambda B / (pi A L)` for a modulation amplitude `B` in volts.
    pub fn dn_for_modulation(&self, modulation_v: f64) -> f64 {
        let lambda = self.wavelength_nm / NM_PER_M;
        let length = self.path_length_mm / MM_PER_M;
        lambda * modulation_v / (std::f64::consts::PI * self.scan_amplitude_v * length)
    }

    pub fn dn_per_volt(&self) -> f64 {
        self.dn_for_modulation(self.modulation_v_per_drive_v)
    }

    pub fn calibrate_dn(&self, drive_v: f64) -> Result<f64> {
        non_negative("drive", drive_v)?;
        Ok(self.dn_per_volt() * drive_v)
    }
}

pub fn calibrate_dn(cal: &ChamberCalibration, drive_v: f64) -> Result<f64> {
    cal.calibrate_dn(drive_v)
}

/// Photons per second carried by `power_w` at `wavelength_nm`.
pub fn photon_flux(power_w: f64, wavelength_nm: f64) -> Result<f64> {
    non_negative("optical power", power_w)?;
    positive("wavelength", wavelength_nm)?;
    Ok(power_w * (wavelength_nm / NM_PER_M) / (PLANCK * SPEED_OF_LIGHT))
}

/// How the two detector inputs are prepared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Twin beams at the optimized electronic gain.
    TwinBeams,
    /// Coherent beams with the twin-beam powers, at the twin-beam gain.
    MatchedCoherent,
    /// Coherent beams of equal detected power, balanced subtraction.
    EqualPowerCoherent,
    /// Coherent probe alone.
    SingleCoherent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RampConfiguration {
    pub label: String,
    pub kind: ProbeKind,
}

impl RampConfiguration {
    pub fn new(label: impl Into<String>, kind: ProbeKind) -> Self {
        Self {
            label: label.into(),
            kind,
        }
    }

    /// Twin beams, matched coherent reference and equal-power coherent beams.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::new("twin_beams", ProbeKind::TwinBeams),
            Self::new("coherent", ProbeKind::MatchedCoherent),
            Self::new("coherent_balanced", ProbeKind::EqualPowerCoherent),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivePoint {
    pub time_s: f64,
    pub drive_v: f64,
}

/// `points` drive values evenly spaced from `start_v` to `stop_v` over `duration_s`.
pub fn linear_ramp(
    start_v: f64,
    stop_v: f64,
    points: usize,
    duration_s: f64,
) -> Result<Vec<DrivePoint>> {
    non_negative("ramp start", start_v)?;
    non_negative("ramp stop", stop_v)?;
    non_negative("ramp duration", duration_s)?;
    if points < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            found: points,
        });
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let f = i as f64 / last;
            DrivePoint {
                time_s: f * duration_s,
                drive_v: start_v + f * (stop_v - start_v),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampScenario {
    pub source: TwinBeamSource,
    /// Optics on the probe arm other than the sensor.
    pub probe_loss: LossChannel,
    pub conj_loss: LossChannel,
    pub sensor: SensorResponse,
    pub post_sensor_power_w: f64,
    pub wavelength_nm: f64,
    pub analyzer: AnalyzerSettings,
    pub drive_schedule: Vec<DrivePoint>,
    pub calibration: ChamberCalibration,
    pub detection_bandwidth_hz: f64,
    /// Noise-only readings used for the floor statistics in stochastic mode.
    pub noise_readings: usize,
    /// Log-detection bias of the analyzer floor, in dB (0 for power averaging).
    pub noise_bias_db: f64,
}

impl RampScenario {
    /// Reference ramp setup: 9 dB source, 70 uW after a silver
    /// nanohole array at 795 nm, 0.73 residual probe transmission, 0.95 on
    /// the conjugate, 100 Hz bandwidth and 500 effective averages.
    pub fn reference() -> Result<Self> {
        let sensor = sensor_response(
            &TransmissionSpectrum::reference(),
            &NanoholeGeometry::new(400.0, 1, 0, 1.0)?,
            &MetalPermittivity::silver_795nm(),
            795.0,
            DEFAULT_SLOPE_WINDOW_NM,
        )?;
        let s = Self {
            source: TwinBeamSource::from_squeezing(SqueezingLevel::from_db(9.0)?, 1.0)?,
            probe_loss: LossChannel::new(0.73)?,
            conj_loss: LossChannel::new(0.95)?,
            sensor,
            post_sensor_power_w: 70e-6,
            wavelength_nm: 795.0,
            analyzer: AnalyzerSettings::new(200e3, 100.0, 10.0, 0.0, 10.0, 50)?,
            drive_schedule: linear_ramp(0.0, 1.0, 101, 10.0)?,
            calibration: ChamberCalibration::new(795.0, 6.35, 2.0, 0.01)?,
            detection_bandwidth_hz: 100.0,
            noise_readings: 200,
            noise_bias_db: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Constant modulation at `delta_n`, analyzed at 10 Hz RBW, 1 Hz VBW
    /// and 50 traces.
    pub fn demo(delta_n: f64) -> Result<Self> {
        positive("demo index change", delta_n)?;
        let base = Self::reference()?;
        let drive = delta_n / base.calibration.dn_per_volt();
        let s = Self {
            analyzer: AnalyzerSettings::new(200e3, 10.0, 1.0, 0.0, 10.0, 50)?,
            detection_bandwidth_hz: 10.0,
            drive_schedule: (0..10)
                .map(|i| DrivePoint {
                    time_s: i as f64,
                    drive_v: drive,
                })
                .collect(),
            ..base
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        positive("post-sensor power", self.post_sensor_power_w)?;
        positive("wavelength", self.wavelength_nm)?;
        positive("detection bandwidth", self.detection_bandwidth_hz)?;
        finite("noise bias", self.noise_bias_db)?;
        if self.sensor.transmission <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sensor transmission",
                reason: "must be positive to refer counts back to the sensor input".into(),
            });
        }
        if self.drive_schedule.is_empty() {
            return Err(Error::InsufficientSamples {
                needed: 1,
                found: 0,
            });
        }
        let mut last_time = f64::NEG_INFINITY;
        for p in &self.drive_schedule {
            finite("schedule time", p.time_s)?;
            non_negative("drive", p.drive_v)?;
            if p.time_s < last_time {
                return Err(Error::InvalidParameter {
                    name: "drive schedule",
                    reason: "times must be non-decreasing".into(),
                });
            }
            last_time = p.time_s;
        }
        if self.noise_readings < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                found: self.noise_readings,
            });
        }
        Ok(())
    }

    /// Detected probe counts per integration window.
    pub fn post_sensor_counts(&self) -> Result<f64> {
        window_counts(
            photon_flux(self.post_sensor_power_w, self.wavelength_nm)?,
            self.detection_bandwidth_hz,
        )
    }

    /// Counts per window incident on the sensor.
    pub fn input_counts(&self) -> Result<f64> {
        Ok(self.post_sensor_counts()? / self.sensor.transmission)
    }

    /// Total probe-arm transmission including the sensor.
    pub fn probe_transmission(&self) -> LossChannel {
        self.probe_loss
            .then(&LossChannel::new(self.sensor.transmission).expect("validated transmission"))
    }

    /// Source moments per window, normalized so that the detected probe
    /// carries the post-sensor counts. The seed flux only fixes the ratio.
    pub fn source_window_moments(&self) -> Result<TwoModeMoments> {
        let raw = self.source.moments(1.0)?;
        let target = self.post_sensor_counts()? / self.probe_transmission().transmission();
        raw.scaled(target / raw.mean_p())
    }

    /// Detected moments and electronic gain for one configuration.
    pub fn detection(&self, kind: ProbeKind) -> Result<(TwoModeMoments, f64)> {
        let probe = self.probe_transmission();
        let src = self.source_window_moments()?;
        let twin = apply_loss(&src, &probe, &self.conj_loss);
        let twin_gain = || optimize_gain(&twin).map(|o| o.electronic_gain);
        let c = self.post_sensor_counts()?;
        Ok(match kind {
            ProbeKind::TwinBeams => (twin, twin_gain()?),
            ProbeKind::MatchedCoherent => {
                let coh = TwoModeMoments::coherent(src.mean_p(), src.mean_c())?;
                (apply_loss(&coh, &probe, &self.conj_loss), twin_gain()?)
            }
            ProbeKind::EqualPowerCoherent => (TwoModeMoments::coherent(c, c)?, 1.0),
            ProbeKind::SingleCoherent => (TwoModeMoments::coherent(c, 0.0)?, 0.0),
        })
    }
}

/// Evaluation mode of [`run_ramp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RampMode {
    Deterministic,
    /// Emulated analyzer readings. Configuration `i` of trial `t` draws from
    /// ChaCha20 stream `(t << 16) | i` under `seed`.
    Stochastic {
        seed: u64,
        trial: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampPoint {
    pub time_s: f64,
    pub drive_v: f64,
    pub delta_n: f64,
    /// Peak count modulation per window.
    pub signal_amplitude: f64,
    pub snr_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationTrace {
    pub label: String,
    pub kind: ProbeKind,
    pub electronic_gain: f64,
    pub detected: TwoModeMoments,
    pub noise: DifferentialNoise,
    pub points: Vec<RampPoint>,
    pub noise_stats: NoiseStats,
}

impl ConfigurationTrace {
    /// Difference noise in dB below its shot-noise level.
    pub fn noise_ratio_db(&self) -> Result<f64> {
        linear_to_db(self.noise.ratio())
    }

    /// `(delta_n, snr_amplitude)` pairs.
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.delta_n, p.snr_amplitude))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampResult {
    pub mode: RampMode,
    pub post_sensor_counts: f64,
    pub input_counts: f64,
    pub effective_averages: f64,
    pub bandwidth_hz: f64,
    pub traces: Vec<ConfigurationTrace>,
}

impl RampResult {
    pub fn trace(&self, kind: ProbeKind) -> Option<&ConfigurationTrace> {
        self.traces.iter().find(|t| t.kind == kind)
    }
}

/// Predicts (or emulates) the SNR of every schedule point for each configuration.
pub fn run_ramp(
    scenario: &RampScenario,
    configs: &[RampConfiguration],
    mode: RampMode,
) -> Result<RampResult> {
    scenario.validate()?;
    if configs.is_empty() {
        return Err(Error::InvalidParameter {
            name: "configurations",
            reason: "at least one configuration is required".into(),
        });
    }
    let n_avg = scenario.analyzer.effective_averages();
    let input_counts = scenario.input_counts()?;
    let mut base_points = Vec::with_capacity(scenario.drive_schedule.len());
    for p in &scenario.drive_schedule {
        let delta_n = scenario.calibration.calibrate_dn(p.drive_v)?;
        base_points.push(RampPoint {
            time_s: p.time_s,
            drive_v: p.drive_v,
            delta_n,
            signal_amplitude: transduce(&scenario.sensor, delta_n, input_counts)?,
            snr_amplitude: 0.0,
        });
    }

    let mut traces = Vec::with_capacity(configs.len());
    for (index, cfg) in configs.iter().enumerate() {
        let (detected, gain) = scenario.detection(cfg.kind)?;
        let noise = differential_noise(&detected, &DifferentialDetector::new(gain)?);
        let mut points = base_points.clone();
        let noise_stats = match mode {
            RampMode::Deterministic => {
                for p in &mut points {
                    p.snr_amplitude =
                        predicted_snr(p.signal_amplitude, noise.variance, n_avg)?.amplitude();
                }
                noise_floor_statistics(n_avg, scenario.noise_bias_db)?
            }
            RampMode::Stochastic { seed, trial } => {
                let mut rng = seeded_rng(seed, (trial << 16) | index as u64);
                let amplitudes: Vec<f64> = points.iter().map(|p| p.signal_amplitude).collect();
                let emulated = emulate_analyzer(
                    &detected,
                    gain,
                    &amplitudes,
                    scenario.noise_readings,
                    n_avg.round().max(1.0) as usize,
                    scenario.noise_bias_db,
                    &mut rng,
                )?;
                for (p, a) in points.iter_mut().zip(emulated.snr_amplitudes) {
                    p.snr_amplitude = a;
                }
                NoiseStats::from_samples(&emulated.noise_amplitudes)?
            }
        };
        traces.push(ConfigurationTrace {
            label: cfg.label.clone(),
            kind: cfg.kind,
            electronic_gain: gain,
            detected,
            noise,
            points,
            noise_stats,
        });
    }
    Ok(RampResult {
        mode,
        post_sensor_counts: scenario.post_sensor_counts()?,
        input_counts,
        effective_averages: n_avg,
        bandwidth_hz: scenario.detection_bandwidth_hz,
        traces,
    })
}

/// Linear fit of SNR amplitude against index change and its threshold crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub slope: f64,
    pub intercept: f64,
    pub threshold: f64,
    pub points_used: usize,
    pub dn_min_raw: f64,
    pub dn_min_per_rthz: f64,
}

/// Fits the points whose SNR amplitude exceeds the noise threshold and
/// returns the index change at which the fit crosses it.
pub fn fit_and_extract(
    series: &[(f64, f64)],
    noise: &NoiseStats,
    confidence: f64,
    bandwidth_hz: f64,
) -> Result<Extraction> {
    positive("bandwidth", bandwidth_hz)?;
    let threshold = noise.threshold(confidence)?;
    let above: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(_, a)| a > threshold)
        .collect();
    if above.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_POINTS,
            found: above.len(),
        });
    }
    let n = above.len() as f64;
    let mx = above.iter().map(|p| p.0).sum::<f64>() / n;
    let my = above.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = above.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = above.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "all fitted points share one index change".into(),
        });
    }
    let slope = sxy / sxx;
    if slope.is_nan() || slope <= 0.0 {
        return Err(Error::NonPositiveSlope(slope));
    }
    let intercept = my - slope * mx;
    let dn_min_raw = (threshold - intercept) / slope;
    if dn_min_raw.is_nan() || dn_min_raw <= 0.0 {
        return Err(Error::InfeasibleSensitivity(format!(
            "fit reaches the threshold at a non-positive index change ({dn_min_raw:e})"
        )));
    }
    Ok(Extraction {
        slope,
        intercept,
        threshold,
        points_used: above.len(),
        dn_min_raw,
        dn_min_per_rthz: dn_min_raw / bandwidth_hz.sqrt(),
    })
}

/// `(dn_snl - dn_q) / dn_q`.
pub fn enhancement(dn_snl: f64, dn_q: f64) -> Result<f64> {
    positive("reference sensitivity", dn_snl)?;
    positive("quantum sensitivity", dn_q)?;
    Ok((dn_snl - dn_q) / dn_q)
}

/// Enhancement of two configurations that differ only by noise ratio `r`.
pub fn enhancement_from_ratio(r: f64) -> Result<f64> {
    positive("noise ratio", r)?;
    Ok((1.0 / r).sqrt() - 1.0)
}

/// Sensitivity of one coherent beam given that of two balanced ones,
/// whose noise floor is twice as large.
pub fn single_coherent_equivalent(dn_balanced: f64) -> Result<f64> {
    non_negative("balanced sensitivity", dn_balanced)?;
    Ok(dn_balanced / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSensitivity {
    pub label: String,
    pub kind: ProbeKind,
    pub electronic_gain: f64,
    pub noise_ratio_db: f64,
    pub noise_stats: NoiseStats,
    pub extraction: Extraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub confidence: f64,
    pub bandwidth_hz: f64,
    pub configurations: Vec<ConfigurationSensitivity>,
    /// Twin beams against the matched coherent reference.
    pub enhancement_vs_balanced: Option<f64>,
    /// Twin beams against a single coherent beam.
    pub enhancement_vs_single: Option<f64>,
    /// Single-beam sensitivity inferred from the equal-power configuration.
    pub single_coherent_equivalent: Option<f64>,
}

impl SensitivityReport {
    pub fn dn_min(&self, kind: ProbeKind) -> Option<f64> {
        self.configurations
            .iter()
            .find(|c| c.kind == kind)
            .map(|c| c.extraction.dn_min_per_rthz)
    }
}

pub fn sensitivity_report(ramp: &RampResult, confidence: f64) -> Result<SensitivityReport> {
    let mut configurations = Vec::with_capacity(ramp.traces.len());
    for t in &ramp.traces {
        configurations.push(ConfigurationSensitivity {
            label: t.label.clone(),
            kind: t.kind,
            electronic_gain: t.electronic_gain,
            noise_ratio_db: t.noise_ratio_db()?,
            noise_stats: t.noise_stats,
            extraction: fit_and_extract(
                &t.series(),
                &t.noise_stats,
                confidence,
                ramp.bandwidth_hz,
            )?,
        });
    }
    let mut report = SensitivityReport {
        confidence,
        bandwidth_hz: ramp.bandwidth_hz,
        configurations,
        enhancement_vs_balanced: None,
        enhancement_vs_single: None,
        single_coherent_equivalent: None,
    };
    let twin = report.dn_min(ProbeKind::TwinBeams);
    report.single_coherent_equivalent = match report.dn_min(ProbeKind::EqualPowerCoherent) {
        Some(dn) => Some(single_coherent_equivalent(dn)?),
        None => report.dn_min(ProbeKind::SingleCoherent),
    };
    if let Some(q) = twin {
        if let Some(c) = report.dn_min(ProbeKind::MatchedCoherent) {
            report.enhancement_vs_balanced = Some(enhancement(c, q)?);
        }
        if let Some(s) = report.single_coherent_equivalent {
            report.enhancement_vs_single = Some(enhancement(s, q)?);
        }
    }
    Ok(report)
}

/// Order-of-magnitude sensitivity of a coherent probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub transmission: f64,
    pub dt_dn: f64,
    pub flux: f64,
    /// Counts in the 1 Hz integration window.
    pub window_counts: f64,
    pub averages: f64,
    pub bandwidth_hz: f64,
    pub dn_min_per_rthz: f64,
    /// `dn_min_per_rthz * sqrt(bandwidth)`.
    pub dn_min_raw: f64,
}

/// `(1 / dT_dn) sqrt(T / I) / sqrt(N)` with `I` the counts of a 1 Hz window.
pub fn budget_estimate(
    transmission: f64,
    dt_dn: f64,
    flux: f64,
    n_avg: f64,
    bandwidth_hz: f64,
) -> Result<Budget> {
    positive("transmission", transmission)?;
    positive("photon flux", flux)?;
    positive("bandwidth", bandwidth_hz)?;
    finite("dT/dn", dt_dn)?;
    if n_avg.is_nan() || n_avg < 1.0 {
        return Err(Error::InvalidParameter {
            name: "averages",
            reason: format!("must be >= 1, got {n_avg}"),
        });
    }
    if dt_dn == 0.0 {
        return Err(Error::InfeasibleSensitivity(
            "the sensor has no index response (dT/dn = 0)".into(),
        ));
    }
    let counts = window_counts(flux, 1.0)?;
    let per_rthz = (transmission / counts).sqrt() / (dt_dn.abs() * n_avg.sqrt());
    Ok(Budget {
        transmission,
        dt_dn,
        flux,
        window_counts: counts,
        averages: n_avg,
        bandwidth_hz,
        dn_min_per_rthz: per_rthz,
        dn_min_raw: per_rthz * bandwidth_hz.sqrt(),
    })
}
