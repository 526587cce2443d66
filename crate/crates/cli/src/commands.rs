//! The five batch commands.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use plasmosense::experiment::{
    budget_estimate, enhancement_from_ratio, linear_ramp, photon_flux, run_ramp,
    sensitivity_report, Budget, ProbeKind, RampMode, RampScenario, SensitivityReport,
};
use plasmosense::oracle::{
    check_difference_noise, estimate_spectrum, sample_counts, validate_pipeline, AveragingMode,
    DifferenceNoiseCheck, NoiseInjection, PipelineValidation, TimeSeriesConfig,
};
use plasmosense::plasmonic::SensorResponse;
use plasmosense::quantum_noise::{
    apply_loss, differential_noise, linear_to_db, optimize_gain, DifferentialDetector, LossChannel,
    SqueezingLevel, TwinBeamSource, TwoModeMoments,
};
use plasmosense::Error;

use crate::config::{
    config_error, section, AnalyzerSection, CalibrationSection, DetectionSection, LossSection,
    NoiseSwitch, ProbeSection, RampModeName, RampSection, SensorSection, SourceSection,
    SqueezingSection, ValidateSection,
};
use crate::report::CommandOutput;
use crate::CliError;

/// Header of the per-configuration ramp traces.
pub const RAMP_CSV_HEADER: [&str; 4] = ["time_s", "drive_v", "delta_n_riu", "snr_amplitude"];

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types always serialize")
}

fn source(cfg: &Value) -> Result<TwinBeamSource, CliError> {
    let s: SourceSection = section(cfg, "source")?;
    let level = SqueezingLevel::from_db(s.squeezing_db).map_err(config_error("source"))?;
    TwinBeamSource::from_squeezing(level, s.seed_flux).map_err(config_error("source"))
}

fn channel(name: &'static str, t: f64) -> Result<LossChannel, CliError> {
    LossChannel::new(t).map_err(config_error(name))
}

pub fn scenario(cfg: &Value) -> Result<RampScenario, CliError> {
    let losses: LossSection = section(cfg, "losses")?;
    let sensor = section::<SensorSection>(cfg, "sensor")?.response()?;
    let probe: ProbeSection = section(cfg, "probe")?;
    let analyzer: AnalyzerSection = section(cfg, "analyzer")?;
    let detection: DetectionSection = section(cfg, "detection")?;
    let ramp: RampSection = section(cfg, "ramp")?;
    let calibration = section::<CalibrationSection>(cfg, "calibration")?.calibration()?;
    let s = RampScenario {
        source: source(cfg)?,
        probe_loss: channel("losses", losses.probe_transmission)?,
        conj_loss: channel("losses", losses.conjugate_transmission)?,
        sensor,
        post_sensor_power_w: probe.post_sensor_power_uw * 1e-6,
        wavelength_nm: sensor.wavelength_nm,
        analyzer: analyzer.settings()?,
        drive_schedule: linear_ramp(ramp.start_v, ramp.stop_v, ramp.points, ramp.duration_s)
            .map_err(config_error("ramp"))?,
        calibration,
        detection_bandwidth_hz: detection.bandwidth_hz,
        noise_readings: ramp.noise_readings,
        noise_bias_db: analyzer.noise_bias_db,
    };
    s.validate().map_err(config_error("scenario"))?;
    Ok(s)
}

#[derive(Serialize)]
struct BudgetReport {
    post_sensor_power_w: f64,
    wavelength_nm: f64,
    sensor: SensorResponse,
    budget: Budget,
}

pub fn budget(cfg: &Value) -> Result<CommandOutput, CliError> {
    let sensor = section::<SensorSection>(cfg, "sensor")?.response()?;
    let probe: ProbeSection = section(cfg, "probe")?;
    let analyzer = section::<AnalyzerSection>(cfg, "analyzer")?.settings()?;
    let detection: DetectionSection = section(cfg, "detection")?;
    let power = probe.post_sensor_power_uw * 1e-6;
    let flux = photon_flux(power, sensor.wavelength_nm)?;
    let budget = budget_estimate(
        sensor.transmission,
        sensor.dt_dn,
        flux,
        analyzer.effective_averages(),
        detection.bandwidth_hz,
    )?;
    let mut text = String::new();
    writeln!(text, "photon flux          {:.4e} photons/s", budget.flux).unwrap();
    writeln!(text, "window counts (1 Hz) {:.4e}", budget.window_counts).unwrap();
    writeln!(text, "transmission         {:.4}", budget.transmission).unwrap();
    writeln!(text, "dT/dn                {:.4} /RIU", budget.dt_dn).unwrap();
    writeln!(text, "averages             {}", budget.averages).unwrap();
    writeln!(
        text,
        "dn_min               {:.4e} RIU/rtHz",
        budget.dn_min_per_rthz
    )
    .unwrap();
    writeln!(
        text,
        "dn_min at {} Hz     {:.4e} RIU",
        budget.bandwidth_hz, budget.dn_min_raw
    )
    .unwrap();
    let report = BudgetReport {
        post_sensor_power_w: power,
        wavelength_nm: sensor.wavelength_nm,
        sensor,
        budget,
    };
    Ok(CommandOutput::from_result(to_value(&report), text))
}

#[derive(Serialize)]
struct SqueezingReport {
    /// dB below the shot-noise limit, here and in `residual_db`.
    source_db: f64,
    source_ratio: f64,
    probe_transmission: f64,
    conjugate_transmission: f64,
    electronic_gain: f64,
    gain_optimized: bool,
    residual_ratio: f64,
    residual_db: f64,
    enhancement: f64,
}

pub fn squeezing(cfg: &Value) -> Result<CommandOutput, CliError> {
    let src = source(cfg)?;
    let losses: LossSection = section(cfg, "losses")?;
    let sq: SqueezingSection = section(cfg, "squeezing")?;
    let tp = match sq.probe_transmission {
        Some(t) => t,
        None => {
            let sensor = section::<SensorSection>(cfg, "sensor")?.response()?;
            losses.probe_transmission * sensor.transmission
        }
    };
    let m = apply_loss(
        &src.moments(1.0)?,
        &channel("squeezing", tp)?,
        &channel("losses", losses.conjugate_transmission)?,
    );
    let gain = match sq.gain {
        Some(g) => g,
        None => optimize_gain(&m)?.electronic_gain,
    };
    let det = DifferentialDetector::new(gain).map_err(config_error("squeezing"))?;
    let ratio = differential_noise(&m, &det).ratio();
    let report = SqueezingReport {
        source_db: linear_to_db(src.ideal_noise_ratio())?,
        source_ratio: src.ideal_noise_ratio(),
        probe_transmission: tp,
        conjugate_transmission: losses.conjugate_transmission,
        electronic_gain: gain,
        gain_optimized: sq.gain.is_none(),
        residual_ratio: ratio,
        residual_db: linear_to_db(ratio)?,
        enhancement: enhancement_from_ratio(ratio)?,
    };
    let mut text = String::new();
    writeln!(text, "source squeezing     {:.3} dB", report.source_db).unwrap();
    writeln!(text, "probe transmission   {:.4}", tp).unwrap();
    writeln!(
        text,
        "conj transmission    {:.4}",
        report.conjugate_transmission
    )
    .unwrap();
    writeln!(
        text,
        "electronic gain      {:.5}{}",
        gain,
        if report.gain_optimized {
            " (optimized)"
        } else {
            ""
        }
    )
    .unwrap();
    writeln!(
        text,
        "residual squeezing   {:.3} dB (ratio {:.5})",
        report.residual_db, ratio
    )
    .unwrap();
    writeln!(
        text,
        "enhancement          {:.1} %",
        100.0 * report.enhancement
    )
    .unwrap();
    Ok(CommandOutput::from_result(to_value(&report), text))
}

#[derive(Serialize)]
struct TraceSummary {
    label: String,
    kind: ProbeKind,
    electronic_gain: f64,
    noise_ratio_db: f64,
    csv_file: String,
}

#[derive(Serialize)]
struct RampReport {
    mode: RampMode,
    post_sensor_counts: f64,
    input_counts: f64,
    effective_averages: f64,
    bandwidth_hz: f64,
    sensor: SensorResponse,
    traces: Vec<TraceSummary>,
    sensitivity: SensitivityReport,
}

fn check_label(label: &str) -> Result<(), CliError> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "`ramp.configurations`: label `{label}` may only use letters, digits, `_` and `-`"
        )))
    }
}

pub fn ramp(cfg: &Value, seed: Option<u64>) -> Result<CommandOutput, CliError> {
    let s = scenario(cfg)?;
    let rs: RampSection = section(cfg, "ramp")?;
    let configs = rs.configurations()?;
    for c in &configs {
        check_label(&c.label)?;
    }
    let mode = match rs.mode {
        RampModeName::Deterministic => RampMode::Deterministic,
        RampModeName::Stochastic => RampMode::Stochastic {
            seed: seed.ok_or_else(|| {
                CliError::Config("stochastic ramps need an explicit --seed".into())
            })?,
            trial: 0,
        },
    };
    let result = run_ramp(&s, &configs, mode)?;
    let sensitivity = sensitivity_report(&result, rs.confidence)?;

    let mut files = Vec::new();
    let mut stdout_rows = vec![std::iter::once("label")
        .chain(RAMP_CSV_HEADER)
        .map(String::from)
        .collect::<Vec<_>>()];
    let mut traces = Vec::new();
    for t in &result.traces {
        let mut rows = vec![RAMP_CSV_HEADER.map(String::from).to_vec()];
        for p in &t.points {
            let row = vec![
                p.time_s.to_string(),
                p.drive_v.to_string(),
                p.delta_n.to_string(),
                p.snr_amplitude.to_string(),
            ];
            stdout_rows.push(
                std::iter::once(t.label.clone())
                    .chain(row.clone())
                    .collect(),
            );
            rows.push(row);
        }
        let name = format!("ramp_{}.csv", t.label);
        files.push((name.clone(), crate::report::csv_bytes(&rows)?));
        traces.push(TraceSummary {
            label: t.label.clone(),
            kind: t.kind,
            electronic_gain: t.electronic_gain,
            noise_ratio_db: t.noise_ratio_db()?,
            csv_file: name,
        });
    }

    let mut text = String::new();
    writeln!(
        text,
        "post-sensor counts {:.4e} per window, {} averages, {} Hz",
        result.post_sensor_counts, result.effective_averages, result.bandwidth_hz
    )
    .unwrap();
    writeln!(
        text,
        "{:<20} {:>8} {:>10} {:>10} {:>14} {:>14}",
        "configuration", "gain", "squeeze dB", "threshold", "dn_min RIU", "RIU/rtHz"
    )
    .unwrap();
    for c in &sensitivity.configurations {
        writeln!(
            text,
            "{:<20} {:>8.4} {:>10.3} {:>10.4} {:>14.4e} {:>14.4e}",
            c.label,
            c.electronic_gain,
            // Rounding leaves coherent light a hair above its shot-noise level.
            if c.noise_ratio_db.abs() < 5e-4 {
                0.0
            } else {
                c.noise_ratio_db
            },
            c.extraction.threshold,
            c.extraction.dn_min_raw,
            c.extraction.dn_min_per_rthz
        )
        .unwrap();
    }
    if let Some(e) = sensitivity.enhancement_vs_balanced {
        writeln!(text, "enhancement vs coherent        {:.1} %", 100.0 * e).unwrap();
    }
    if let Some(d) = sensitivity.single_coherent_equivalent {
        writeln!(text, "single coherent equivalent     {:.4e} RIU/rtHz", d).unwrap();
    }
    if let Some(e) = sensitivity.enhancement_vs_single {
        writeln!(text, "enhancement vs single coherent {:.1} %", 100.0 * e).unwrap();
    }

    let report = RampReport {
        mode,
        post_sensor_counts: result.post_sensor_counts,
        input_counts: result.input_counts,
        effective_averages: result.effective_averages,
        bandwidth_hz: result.bandwidth_hz,
        sensor: s.sensor,
        traces,
        sensitivity,
    };
    Ok(CommandOutput {
        result: to_value(&report),
        text,
        csv_rows: stdout_rows,
        files,
    })
}

#[derive(Serialize)]
struct CalibrationRow {
    drive_v: f64,
    modulation_v: f64,
    delta_n_riu: f64,
}

#[derive(Serialize)]
struct CalibrationReport {
    dn_per_volt: f64,
    table: Vec<CalibrationRow>,
}

pub fn calibrate(cfg: &Value) -> Result<CommandOutput, CliError> {
    let sec: CalibrationSection = section(cfg, "calibration")?;
    let cal = sec.calibration()?;
    let mut table = Vec::with_capacity(sec.table_drive_v.len());
    for &d in &sec.table_drive_v {
        table.push(CalibrationRow {
            drive_v: d,
            modulation_v: d * cal.modulation_v_per_drive_v,
            delta_n_riu: cal.calibrate_dn(d).map_err(config_error("calibration"))?,
        });
    }
    let mut text = format!("dn per drive volt  {:.5e} RIU/V\n", cal.dn_per_volt());
    writeln!(text, "{:>10} {:>12} {:>14}", "drive V", "B (V)", "dn (RIU)").unwrap();
    for r in &table {
        writeln!(
            text,
            "{:>10.4} {:>12.5} {:>14.5e}",
            r.drive_v, r.modulation_v, r.delta_n_riu
        )
        .unwrap();
    }
    let report = CalibrationReport {
        dn_per_volt: cal.dn_per_volt(),
        table,
    };
    let mut out = CommandOutput::from_result(to_value(&report), text);
    out.csv_rows = std::iter::once(vec![
        "drive_v".into(),
        "modulation_v".into(),
        "delta_n_riu".into(),
    ])
    .chain(report.table.iter().map(|r| {
        vec![
            r.drive_v.to_string(),
            r.modulation_v.to_string(),
            r.delta_n_riu.to_string(),
        ]
    }))
    .collect();
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub check: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Serialize)]
struct GridPoint {
    probe_transmission: f64,
    conjugate_transmission: f64,
    #[serde(flatten)]
    check: DifferenceNoiseCheck,
    z_score: f64,
}

#[derive(Serialize)]
struct ParsevalCheck {
    samples: usize,
    series_variance: f64,
    spectrum_integral: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    passed: bool,
    failures: Vec<Failure>,
    total_oracle_samples: usize,
    difference_noise: Vec<GridPoint>,
    parseval: ParsevalCheck,
    pipeline: PipelineValidation,
}

/// Mean probe photons per sample used by the oracle grid.
const ORACLE_COUNTS_PER_SAMPLE: f64 = 1e6;

fn invariant_as_failure(e: Error) -> CliError {
    match e {
        Error::InvariantViolation(msg) => CliError::Validation(vec![msg]),
        other => CliError::Compute(other),
    }
}

pub fn validate(cfg: &Value, seed: Option<u64>) -> Result<(CommandOutput, Vec<Failure>), CliError> {
    let seed = seed.ok_or_else(|| CliError::Config("validate needs an explicit --seed".into()))?;
    let v: ValidateSection = section(cfg, "validate")?;
    let src = source(cfg)?.moments(1.0)?;
    let src = TwoModeMoments::new(
        src.mean_p(),
        src.mean_c(),
        src.var_p(),
        src.var_c(),
        src.cov() * v.covariance_scale,
    )
    .map_err(invariant_as_failure)?;
    let per_sample = src.scaled(ORACLE_COUNTS_PER_SAMPLE / src.mean_p())?;
    let mut failures = Vec::new();

    let mut grid = Vec::new();
    let mut stream = 0u64;
    for &tp in &v.probe_transmissions {
        for &tc in &v.conjugate_transmissions {
            let m = apply_loss(
                &per_sample,
                &channel("validate", tp)?,
                &channel("validate", tc)?,
            );
            for &g in &v.gains {
                let check = check_difference_noise(&m, g, v.samples_per_point, seed, stream)
                    .map_err(invariant_as_failure)?;
                stream += 1;
                if !check.passes(v.k_sigma) {
                    failures.push(Failure {
                        check: format!("difference noise tp={tp} tc={tc} g={g}"),
                        measured: check.empirical_ratio,
                        expected: check.analytic_ratio,
                        tolerance: v.k_sigma * check.standard_error,
                    });
                }
                grid.push(GridPoint {
                    probe_transmission: tp,
                    conjugate_transmission: tc,
                    z_score: check.z_score(),
                    check,
                });
            }
        }
    }
    let total_oracle_samples = grid.len() * v.samples_per_point;

    let mut s = scenario(cfg)?;
    let rs: RampSection = section(cfg, "ramp")?;
    let configs = rs.configurations()?;

    // Parseval on the detected twin-beam difference series.
    let (detected, gain) = s.detection(ProbeKind::TwinBeams)?;
    let detected = detected.scaled(ORACLE_COUNTS_PER_SAMPLE / detected.mean_p())?;
    let ts = TimeSeriesConfig::new(65536.0, 1.0, seed, None)?;
    let series = sample_counts(&detected, &ts).map_err(invariant_as_failure)?;
    let diff = series.difference(gain);
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    let variance = diff.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / diff.len() as f64;
    let spectrum = estimate_spectrum(&diff, ts.sample_rate_hz, 1024, AveragingMode::Power)?;
    let parseval = ParsevalCheck {
        samples: diff.len(),
        series_variance: variance,
        spectrum_integral: spectrum.integral(),
        relative_error: spectrum.integral() / variance - 1.0,
    };
    if parseval.relative_error.abs() > v.parseval_tolerance {
        failures.push(Failure {
            check: "parseval".into(),
            measured: parseval.spectrum_integral,
            expected: parseval.series_variance,
            tolerance: v.parseval_tolerance,
        });
    }

    s.drive_schedule = linear_ramp(rs.start_v, rs.stop_v, v.ramp_points, rs.duration_s)
        .map_err(config_error("validate"))?;
    s.noise_readings = v.noise_readings;
    let noise = match v.noise {
        NoiseSwitch::On => NoiseInjection::On,
        NoiseSwitch::Off => NoiseInjection::Off,
    };
    let pipeline = validate_pipeline(&s, &configs, rs.confidence, v.trials, seed, noise)
        .map_err(invariant_as_failure)?;
    for c in &pipeline.configurations {
        if (c.mean_ratio - 1.0).abs() > v.ratio_tolerance {
            failures.push(Failure {
                check: format!("sensitivity ratio {}", c.label),
                measured: c.mean_ratio,
                expected: 1.0,
                tolerance: v.ratio_tolerance,
            });
        }
    }
    if let (Some(a), Some(e)) = (
        pipeline.analytic_enhancement,
        pipeline.empirical_enhancement,
    ) {
        if (e - a).abs() > v.enhancement_tolerance {
            failures.push(Failure {
                check: "enhancement".into(),
                measured: e,
                expected: a,
                tolerance: v.enhancement_tolerance,
            });
        }
    }

    let mut text = String::new();
    let worst = grid.iter().map(|g| g.z_score.abs()).fold(0.0, f64::max);
    writeln!(
        text,
        "difference noise   {} grid points, {} samples, worst |z| = {:.2}",
        grid.len(),
        total_oracle_samples,
        worst
    )
    .unwrap();
    writeln!(
        text,
        "parseval           relative error {:.2e}",
        parseval.relative_error
    )
    .unwrap();
    for c in &pipeline.configurations {
        writeln!(
            text,
            "{:<20} mean trial/prediction {:.4} (95% CI {:.4}..{:.4})",
            c.label, c.mean_ratio, c.ratio_ci.0, c.ratio_ci.1
        )
        .unwrap();
    }
    if let (Some(a), Some(e)) = (
        pipeline.analytic_enhancement,
        pipeline.empirical_enhancement,
    ) {
        writeln!(
            text,
            "enhancement        empirical {:.4}, analytic {:.4}",
            e, a
        )
        .unwrap();
    }
    for f in &failures {
        writeln!(
            text,
            "FAIL {}: measured {:.6e}, expected {:.6e}, tolerance {:.3e}",
            f.check, f.measured, f.expected, f.tolerance
        )
        .unwrap();
    }
    writeln!(
        text,
        "{}",
        if failures.is_empty() { "PASS" } else { "FAIL" }
    )
    .unwrap();

    let report = ValidateReport {
        passed: failures.is_empty(),
        failures: Vec::new(),
        total_oracle_samples,
        difference_noise: grid,
        parseval,
        pipeline,
    };
    let mut result = to_value(&report);
    result["failures"] = to_value(&failures);
    Ok((CommandOutput::from_result(result, text), failures))
}
