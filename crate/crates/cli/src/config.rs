//! Configuration loading, overrides and typed section access.
//!
//! A configuration is held as a JSON tree so that it can be embedded in run
//! manifests verbatim and read back without loss.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use plasmosense::experiment::{ChamberCalibration, ProbeKind, RampConfiguration};
use plasmosense::plasmonic::{
    sensor_response, MetalPermittivity, NanoholeGeometry, SensorResponse, TransmissionSpectrum,
};
use plasmosense::signal_chain::AnalyzerSettings;

use crate::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/reference.toml");

pub fn parse_toml(text: &str, origin: &str) -> Result<Value, CliError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    serde_json::to_value(table).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn load(path: Option<&Path>) -> Result<Value, CliError> {
    match path {
        None => parse_toml(DEFAULT_CONFIG, "built-in configuration"),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            parse_toml(&text, &p.display().to_string())
        }
    }
}

/// Applies `key.path=value`; the value is read as TOML, or as a bare string.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!(
            "override key `{key}` is malformed"
        )));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key"))
            .map_err(|e| CliError::Config(format!("{key}: {e}")))?,
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = match node {
            Value::Object(m) => m,
            _ => {
                return Err(CliError::Config(format!(
                    "cannot set `{key}`: `{}` is not a section",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last key")
}

/// Deserializes one top-level section, reporting errors by key path.
pub fn section<T: DeserializeOwned>(config: &Value, name: &str) -> Result<T, CliError> {
    let value = config
        .get(name)
        .ok_or_else(|| CliError::Config(format!("missing section `{name}`")))?;
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            name.to_string()
        } else {
            format!("{name}.{inner}")
        };
        CliError::Config(format!("`{path}`: {}", e.into_inner()))
    })
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub squeezing_db: f64,
    pub seed_flux: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub probe_transmission: f64,
    pub conjugate_transmission: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub wavelength_nm: f64,
    pub spectrum_csv: Option<String>,
    pub slope_window_nm: f64,
    pub pitch_nm: f64,
    pub mode_p: i32,
    pub mode_q: i32,
    pub medium_index: f64,
    pub metal_eps_real: f64,
    pub metal_eps_imag: f64,
    pub transmission: Option<f64>,
    pub dt_dn: Option<f64>,
}

impl SensorSection {
    pub fn response(&self) -> Result<SensorResponse, CliError> {
        let spectrum = match &self.spectrum_csv {
            Some(p) => TransmissionSpectrum::from_csv_path(p)
                .map_err(|e| CliError::Config(format!("`sensor.spectrum_csv`: {e}")))?,
            None => TransmissionSpectrum::reference(),
        };
        let geom =
            NanoholeGeometry::new(self.pitch_nm, self.mode_p, self.mode_q, self.medium_index)
                .map_err(config_error("sensor"))?;
        let metal = MetalPermittivity::new(self.metal_eps_real, self.metal_eps_imag)
            .map_err(config_error("sensor"))?;
        let derived = sensor_response(
            &spectrum,
            &geom,
            &metal,
            self.wavelength_nm,
            self.slope_window_nm,
        )?;
        if self.transmission.is_none() && self.dt_dn.is_none() {
            return Ok(derived);
        }
        SensorResponse::from_transduction(
            self.wavelength_nm,
            self.transmission.unwrap_or(derived.transmission),
            self.dt_dn.unwrap_or(derived.dt_dn),
        )
        .map_err(config_error("sensor"))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub post_sensor_power_uw: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerSection {
    pub center_freq_hz: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub span_hz: f64,
    pub sweep_time_s: f64,
    pub trace_averages: u32,
    pub noise_bias_db: f64,
}

impl AnalyzerSection {
    pub fn settings(&self) -> Result<AnalyzerSettings, CliError> {
        AnalyzerSettings::new(
            self.center_freq_hz,
            self.rbw_hz,
            self.vbw_hz,
            self.span_hz,
            self.sweep_time_s,
            self.trace_averages,
        )
        .map_err(config_error("analyzer"))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub bandwidth_hz: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub wavelength_nm: f64,
    pub path_length_mm: f64,
    pub scan_amplitude_v: f64,
    pub modulation_v_per_drive_v: f64,
    pub table_drive_v: Vec<f64>,
}

impl CalibrationSection {
    pub fn calibration(&self) -> Result<ChamberCalibration, CliError> {
        ChamberCalibration::new(
            self.wavelength_nm,
            self.path_length_mm,
            self.scan_amplitude_v,
            self.modulation_v_per_drive_v,
        )
        .map_err(config_error("calibration"))
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezingSection {
    pub probe_transmission: Option<f64>,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RampModeName {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationEntry {
    pub label: String,
    pub kind: ProbeKind,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RampSection {
    pub start_v: f64,
    pub stop_v: f64,
    pub points: usize,
    pub duration_s: f64,
    pub noise_readings: usize,
    pub confidence: f64,
    pub mode: RampModeName,
    pub configurations: Vec<ConfigurationEntry>,
}

impl RampSection {
    pub fn configurations(&self) -> Result<Vec<RampConfiguration>, CliError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.configurations {
            if !seen.insert(c.label.as_str()) {
                return Err(CliError::Config(format!(
                    "`ramp.configurations`: duplicate label `{}`",
                    c.label
                )));
            }
        }
        Ok(self
            .configurations
            .iter()
            .map(|c| RampConfiguration::new(c.label.clone(), c.kind))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSwitch {
    On,
    Off,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub trials: usize,
    pub noise: NoiseSwitch,
    pub ramp_points: usize,
    pub noise_readings: usize,
    pub probe_transmissions: Vec<f64>,
    pub conjugate_transmissions: Vec<f64>,
    pub gains: Vec<f64>,
    pub samples_per_point: usize,
    pub k_sigma: f64,
    pub parseval_tolerance: f64,
    pub ratio_tolerance: f64,
    pub enhancement_tolerance: f64,
    pub covariance_scale: f64,
}

/// Wraps a core error raised while checking a config section as a config error.
pub fn config_error(section: &'static str) -> impl Fn(plasmosense::Error) -> CliError {
    move |e| CliError::Config(format!("`{section}`: {e}"))
}
