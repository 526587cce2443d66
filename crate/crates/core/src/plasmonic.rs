//! Optical response of the nanohole-array (EOT) sensor.
//!
//! The sensor converts a refractive-index change into a transmission change
//! through two factors: the spectral slope `dT/dlambda` read off the
//! transmission spectrum at the operating wavelength, and the resonance
//! dispersion `S = dlambda/dn` of the excited surface-plasmon mode.

use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{finite, non_negative, positive, Error, Result};
use crate::quantum_noise::LossChannel;

/// Minimum number of samples inside the slope-fit window.
pub const MIN_SLOPE_SAMPLES: usize = 5;

/// Default full width of the slope-fit window (nm).
pub const DEFAULT_SLOPE_WINDOW_NM: f64 = 10.0;

const REFERENCE_SPECTRUM_CSV: &str = include_str!("../data/eot_spectrum_approx.csv");

/// Sampled transmission spectrum `T(lambda)`.
///
/// Wavelengths (nm) are strictly increasing and every transmission lies in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpectrum {
    wavelengths_nm: Vec<f64>,
    transmission: Vec<f64>,
}

#[derive(Deserialize)]
struct SpectrumRow {
    wavelength_nm: f64,
    transmission: f64,
}

impl TransmissionSpectrum {
    pub fn new(samples: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let (wavelengths_nm, transmission): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        if wavelengths_nm.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                found: wavelengths_nm.len(),
            });
        }
        for (i, (&w, &t)) in wavelengths_nm.iter().zip(&transmission).enumerate() {
            finite("wavelength", w)?;
            finite("transmission", t)?;
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfRange {
                    what: "transmission",
                    value: t,
                    min: 0.0,
                    max: 1.0,
                });
            }
            if i > 0 && w <= wavelengths_nm[i - 1] {
                return Err(Error::SpectrumData(format!(
                    "wavelengths must be strictly increasing ({} then {w} nm)",
                    wavelengths_nm[i - 1]
                )));
            }
        }
        Ok(Self {
            wavelengths_nm,
            transmission,
        })
    }

    /// Parses the two-column CSV format `wavelength_nm,transmission`.
    /// The header row is required; lines starting with `#` are comments.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::SpectrumData(e.to_string()))?
            .clone();
        let expected = ["wavelength_nm", "transmission"];
        if headers.len() != 2 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::SpectrumData(format!(
                "header must be `wavelength_nm,transmission`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (line, row) in rdr.deserialize::<SpectrumRow>().enumerate() {
            let row = row.map_err(|e| Error::SpectrumData(format!("row {}: {e}", line + 1)))?;
            samples.push((row.wavelength_nm, row.transmission));
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::SpectrumData(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// The bundled approximate spectrum of the triangular nanohole array.
    /// Only its value and local slope at 795 nm are meaningful.
    pub fn reference() -> Self {
        Self::from_csv_reader(REFERENCE_SPECTRUM_CSV.as_bytes())
            .expect("bundled spectrum is well formed")
    }

    pub fn len(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths_nm.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavelengths_nm
            .iter()
            .copied()
            .zip(self.transmission.iter().copied())
    }

    pub fn range_nm(&self) -> (f64, f64) {
        (
            self.wavelengths_nm[0],
            *self.wavelengths_nm.last().expect("non-empty"),
        )
    }

    /// Linear interpolation of `T` at `wavelength_nm`.
    pub fn transmission_at(&self, wavelength_nm: f64) -> Result<f64> {
        finite("wavelength", wavelength_nm)?;
        let (lo, hi) = self.range_nm();
        if !(lo..=hi).contains(&wavelength_nm) {
            return Err(Error::OutOfRange {
                what: "wavelength (nm)",
                value: wavelength_nm,
                min: lo,
                max: hi,
            });
        }
        let idx = self.wavelengths_nm.partition_point(|&w| w < wavelength_nm);
        if self.wavelengths_nm[idx] == wavelength_nm {
            return Ok(self.transmission[idx]);
        }
        let (w0, w1) = (self.wavelengths_nm[idx - 1], self.wavelengths_nm[idx]);
        let (t0, t1) = (self.transmission[idx - 1], self.transmission[idx]);
        let frac = (wavelength_nm - w0) / (w1 - w0);
        Ok(t0 + frac * (t1 - t0))
    }

    /// Least-squares slope of the samples with `|lambda_i - lambda| <= window/2`.
    pub fn slope_at(&self, wavelength_nm: f64, window_nm: f64) -> Result<f64> {
        finite("wavelength", wavelength_nm)?;
        positive("slope window", window_nm)?;
        let half = 0.5 * window_nm * (1.0 + 1e-12);
        let pts: Vec<(f64, f64)> = self
            .samples()
            .filter(|(w, _)| (w - wavelength_nm).abs() <= half)
            .collect();
        if pts.len() < MIN_SLOPE_SAMPLES {
            return Err(Error::InsufficientSamples {
                needed: MIN_SLOPE_SAMPLES,
                found: pts.len(),
            });
        }
        let n = pts.len() as f64;
        let mean_w = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_t = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(sxy, sxx), (w, t)| {
            let dw = w - mean_w;
            (sxy + dw * (t - mean_t), sxx + dw * dw)
        });
        Ok(sxy / sxx)
    }
}

/// Geometry of the nanohole lattice and the excited plasmon mode `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NanoholeGeometry {
    pub pitch_nm: f64,
    pub mode_p: i32,
    pub mode_q: i32,
    pub medium_index: f64,
}

impl NanoholeGeometry {
    pub fn new(pitch_nm: f64, mode_p: i32, mode_q: i32, medium_index: f64) -> Result<Self> {
        positive("lattice pitch", pitch_nm)?;
        positive("medium refractive index", medium_index)?;
        if mode_p == 0 && mode_q == 0 {
            return Err(Error::InvalidParameter {
                name: "plasmon mode",
                reason: "(p, q) = (0, 0) has no grating coupling".into(),
            });
        }
        Ok(Self {
            pitch_nm,
            mode_p,
            mode_q,
            medium_index,
        })
    }

    fn mode_norm(&self) -> f64 {
        f64::from(self.mode_p).hypot(f64::from(self.mode_q))
    }
}

/// Relative permittivity of the metal film; the real part must be negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetalPermittivity {
    pub real: f64,
    pub imag: f64,
}

impl MetalPermittivity {
    pub fn new(real: f64, imag: f64) -> Result<Self> {
        finite("permittivity (real)", real)?;
        finite("permittivity (imag)", imag)?;
        if real >= 0.0 {
            return Err(Error::InvalidParameter {
                name: "metal permittivity",
                reason: format!("real part must be negative for a plasmonic metal, got {real}"),
            });
        }
        Ok(Self { real, imag })
    }

    /// Silver at 795 nm.
    pub fn silver_795nm() -> Self {
        Self {
            real: -24.5,
            imag: 1.83,
        }
    }

    fn as_complex(&self) -> Complex64 {
        Complex64::new(self.real, self.imag)
    }
}

/// Resonance dispersion `S = dlambda/dn` (nm/RIU) of a nanohole array:
/// `d / sqrt(p^2 + q^2) * |(eps_m / (n^2 + eps_m))^(3/2)|`.
pub fn dispersion_s(geom: &NanoholeGeometry, metal: &MetalPermittivity) -> Result<f64> {
    let eps = metal.as_complex();
    let denom = eps + geom.medium_index * geom.medium_index;
    if denom.norm() <= f64::EPSILON * eps.norm().max(1.0) {
        return Err(Error::DispersionPole);
    }
    let factor = (eps / denom).powf(1.5).norm();
    Ok(geom.pitch_nm / geom.mode_norm() * factor)
}

/// Transduction coefficients of the sensor at one operating wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorResponse {
    pub wavelength_nm: f64,
    pub transmission: f64,
    pub dt_dlambda: f64,
    pub dispersion_s: f64,
    pub dt_dn: f64,
}

impl SensorResponse {
    /// Builds the response from its factors; `dt_dn = |dT/dlambda| * |S|`.
    pub fn from_parts(
        wavelength_nm: f64,
        transmission: f64,
        dt_dlambda: f64,
        dispersion_s: f64,
    ) -> Result<Self> {
        finite("wavelength", wavelength_nm)?;
        finite("dT/dlambda", dt_dlambda)?;
        finite("dispersion", dispersion_s)?;
        LossChannel::new(transmission)?;
        Ok(Self {
            wavelength_nm,
            transmission,
            dt_dlambda,
            dispersion_s,
            dt_dn: dt_dlambda.abs() * dispersion_s.abs(),
        })
    }

    /// A response known only through `T` and `|dT/dn|`.
    pub fn from_transduction(wavelength_nm: f64, transmission: f64, dt_dn: f64) -> Result<Self> {
        non_negative("dT/dn", dt_dn)?;
        Self::from_parts(wavelength_nm, transmission, dt_dn, 1.0)
    }
}

/// Evaluates transmission, slope and dispersion and combines them.
pub fn sensor_response(
    spectrum: &TransmissionSpectrum,
    geom: &NanoholeGeometry,
    metal: &MetalPermittivity,
    wavelength_nm: f64,
    window_nm: f64,
) -> Result<SensorResponse> {
    let t = spectrum.transmission_at(wavelength_nm)?;
    let slope = spectrum.slope_at(wavelength_nm, window_nm)?;
    let s = dispersion_s(geom, metal)?;
    SensorResponse::from_parts(wavelength_nm, t, slope, s)
}

/// Peak count modulation produced by an index change `delta_n` on
/// `input_counts` photons incident on the sensor.
pub fn transduce(resp: &SensorResponse, delta_n: f64, input_counts: f64) -> Result<f64> {
    non_negative("index change", delta_n)?;
    non_negative("input counts", input_counts)?;
    Ok(input_counts * resp.dt_dn * delta_n)
}

/// Single Gaussian resonance used as a synthetic spectrum:
///
/// `T(lambda) = baseline - depth * exp(-(lambda - center)^2 / (2 width^2))`.
///
/// A positive `depth` is a dip (`T(center) = baseline - depth`), a negative
/// one a peak. The curve has its inflection points at `center +/- width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticResonance {
    pub center_nm: f64,
    pub depth: f64,
    pub width_nm: f64,
    pub baseline: f64,
}

impl SyntheticResonance {
    pub fn new(center_nm: f64, depth: f64, width_nm: f64, baseline: f64) -> Result<Self> {
        finite("resonance center", center_nm)?;
        finite("resonance depth", depth)?;
        positive("resonance width", width_nm)?;
        finite("baseline", baseline)?;
        for (what, value) in [
            ("baseline", baseline),
            ("resonance extremum", baseline - depth),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange {
                    what,
                    value,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        Ok(Self {
            center_nm,
            depth,
            width_nm,
            baseline,
        })
    }

    pub fn value_at(&self, wavelength_nm: f64) -> f64 {
        let x = (wavelength_nm - self.center_nm) / self.width_nm;
        self.baseline - self.depth * (-0.5 * x * x).exp()
    }

    pub fn derivative_at(&self, wavelength_nm: f64) -> f64 {
        let x = (wavelength_nm - self.center_nm) / self.width_nm;
        self.depth * x / self.width_nm * (-0.5 * x * x).exp()
    }

    /// Samples on the uniform grid `start, start + step, ...` up to `stop`.
    pub fn sample(
        &self,
        start_nm: f64,
        stop_nm: f64,
        step_nm: f64,
    ) -> Result<TransmissionSpectrum> {
        positive("grid step", step_nm)?;
        if stop_nm.is_nan() || stop_nm <= start_nm {
            return Err(Error::InvalidParameter {
                name: "wavelength grid",
                reason: format!("stop {stop_nm} must exceed start {start_nm}"),
            });
        }
        let count = ((stop_nm - start_nm) / step_nm + 1e-9).floor() as usize + 1;
        TransmissionSpectrum::new((0..count).map(|i| {
            let w = start_nm + i as f64 * step_nm;
            (w, self.value_at(w).clamp(0.0, 1.0))
        }))
    }
}

/// Convenience wrapper: a Gaussian resonance sampled over `center +/- 6 width`
/// with 200 samples per width.
pub fn synth_spectrum(
    center_nm: f64,
    depth: f64,
    width_nm: f64,
    baseline: f64,
) -> Result<TransmissionSpectrum> {
    let res = SyntheticResonance::new(center_nm, depth, width_nm, baseline)?;
    res.sample(
        center_nm - 6.0 * width_nm,
        center_nm + 6.0 * width_nm,
        width_nm / 200.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_geometry() -> NanoholeGeometry {
        NanoholeGeometry::new(400.0, 1, 0, 1.0).unwrap()
    }

    fn linear_spectrum() -> TransmissionSpectrum {
        TransmissionSpectrum::new((0..=60).map(|i| {
            let w = 780.0 + 0.5 * i as f64;
            (w, 0.5 + 0.004 * (w - 795.0))
        }))
        .unwrap()
    }

    #[test]
    fn interpolation() {
        let two = TransmissionSpectrum::new([(790.0, 0.6), (800.0, 0.7)]).unwrap();
        assert_relative_eq!(
            two.transmission_at(795.0).unwrap(),
            0.65,
            max_relative = 1e-15
        );
        assert_eq!(two.transmission_at(790.0).unwrap(), 0.6);
        assert_eq!(two.transmission_at(800.0).unwrap(), 0.7);
        assert!(matches!(
            two.transmission_at(801.0),
            Err(Error::OutOfRange { .. })
        ));

        let flat = TransmissionSpectrum::new((0..10).map(|i| (700.0 + i as f64, 0.5))).unwrap();
        assert_eq!(flat.transmission_at(703.3).unwrap(), 0.5);
    }

    #[test]
    fn spectrum_validation() {
        assert!(TransmissionSpectrum::new([(790.0, 0.6), (790.0, 0.7)]).is_err());
        assert!(TransmissionSpectrum::new([(790.0, 0.6), (800.0, 1.2)]).is_err());
        assert!(TransmissionSpectrum::new([(790.0, 0.6)]).is_err());
    }

    #[test]
    fn slopes() {
        let flat = TransmissionSpectrum::new((0..20).map(|i| (790.0 + i as f64, 0.3))).unwrap();
        assert_eq!(flat.slope_at(800.0, 10.0).unwrap(), 0.0);

        let lin = linear_spectrum();
        for window in [2.0, 5.0, 10.0, 20.0] {
            assert_relative_eq!(
                lin.slope_at(795.0, window).unwrap(),
                0.004,
                max_relative = 1e-9
            );
        }
        assert!(matches!(
            lin.slope_at(795.0, 1.0),
            Err(Error::InsufficientSamples {
                needed: 5,
                found: 3
            })
        ));
    }

    #[test]
    fn reference_spectrum_at_operating_point() {
        let spec = TransmissionSpectrum::reference();
        assert!((spec.transmission_at(795.0).unwrap() - 0.66).abs() <= 0.02);
        let slope = spec.slope_at(795.0, DEFAULT_SLOPE_WINDOW_NM).unwrap();
        assert!((slope.abs() - 0.006).abs() <= 0.002);
    }

    #[test]
    fn csv_parsing() {
        let good = "wavelength_nm,transmission\n# comment\n790,0.6\n800,0.7\n";
        let spec = TransmissionSpectrum::from_csv_reader(good.as_bytes()).unwrap();
        assert_eq!(spec.len(), 2);

        let no_header = "790,0.6\n800,0.7\n";
        assert!(TransmissionSpectrum::from_csv_reader(no_header.as_bytes()).is_err());

        let decreasing = "wavelength_nm,transmission\n800,0.6\n790,0.7\n";
        assert!(TransmissionSpectrum::from_csv_reader(decreasing.as_bytes()).is_err());

        let junk = "wavelength_nm,transmission\n790,abc\n";
        assert!(TransmissionSpectrum::from_csv_reader(junk.as_bytes()).is_err());
    }

    #[test]
    fn dispersion_values() {
        let s = dispersion_s(&reference_geometry(), &MetalPermittivity::silver_795nm()).unwrap();
        assert!((s - 425.0).abs() <= 3.0, "S = {s}");

        let real_metal = MetalPermittivity::new(-2.0, 0.0).unwrap();
        let s = dispersion_s(&reference_geometry(), &real_metal).unwrap();
        assert_relative_eq!(s, 400.0 * 2f64.powf(1.5), max_relative = 1e-12);
        assert!((s - 1131.4).abs() < 0.05);

        let diag = NanoholeGeometry::new(400.0, 1, 1, 1.0).unwrap();
        let s_diag = dispersion_s(&diag, &real_metal).unwrap();
        assert_relative_eq!(s_diag, s / 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn dispersion_errors() {
        assert!(NanoholeGeometry::new(400.0, 0, 0, 1.0).is_err());
        assert!(MetalPermittivity::new(2.0, 0.1).is_err());
        let pole = MetalPermittivity::new(-1.0, 0.0).unwrap();
        assert_eq!(
            dispersion_s(&reference_geometry(), &pole),
            Err(Error::DispersionPole)
        );
    }

    #[test]
    fn composed_response() {
        let spec = TransmissionSpectrum::reference();
        let resp = sensor_response(
            &spec,
            &reference_geometry(),
            &MetalPermittivity::silver_795nm(),
            795.0,
            DEFAULT_SLOPE_WINDOW_NM,
        )
        .unwrap();
        assert!((resp.dt_dn - 2.5).abs() <= 0.9);
        assert_eq!(resp.dt_dn, resp.dt_dlambda.abs() * resp.dispersion_s.abs());

        let flat = TransmissionSpectrum::new((0..20).map(|i| (790.0 + i as f64, 0.5))).unwrap();
        let resp = sensor_response(
            &flat,
            &reference_geometry(),
            &MetalPermittivity::silver_795nm(),
            795.0,
            10.0,
        )
        .unwrap();
        assert_eq!(resp.dt_dn, 0.0);

        let resp = SensorResponse::from_parts(795.0, 0.66, -0.004, 500.0).unwrap();
        assert_relative_eq!(resp.dt_dn, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn transduction() {
        let resp = SensorResponse::from_transduction(795.0, 0.66, 2.5).unwrap();
        assert_eq!(transduce(&resp, 0.0, 1.5e14).unwrap(), 0.0);
        assert_relative_eq!(
            transduce(&resp, 1e-9, 1.5e14).unwrap(),
            3.75e5,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            transduce(&resp, 2e-9, 1.5e14).unwrap(),
            2.0 * transduce(&resp, 1e-9, 1.5e14).unwrap(),
            max_relative = 1e-15
        );
        assert!(transduce(&resp, -1e-9, 1.0).is_err());
    }

    #[test]
    fn synthetic_resonance() {
        let flat = synth_spectrum(800.0, 0.0, 10.0, 0.4).unwrap();
        assert!(flat.samples().all(|(_, t)| t == 0.4));

        let dip = SyntheticResonance::new(800.0, 0.3, 10.0, 0.8).unwrap();
        assert_relative_eq!(dip.value_at(800.0), 0.5, max_relative = 1e-15);
        let peak = SyntheticResonance::new(800.0, -0.1, 10.0, 0.8).unwrap();
        assert_relative_eq!(peak.value_at(800.0), 0.9, max_relative = 1e-15);

        assert!(SyntheticResonance::new(800.0, 0.9, 10.0, 0.8).is_err());
        assert!(SyntheticResonance::new(800.0, 0.1, 0.0, 0.8).is_err());
    }

    #[test]
    fn synthetic_slope_at_inflection() {
        let dip = SyntheticResonance::new(800.0, 0.3, 10.0, 0.8).unwrap();
        let x = 810.0;
        let h = 1e-3;
        let fd = (dip.value_at(x + h) - dip.value_at(x - h)) / (2.0 * h);
        assert_relative_eq!(fd, dip.derivative_at(x), max_relative = 1e-6);

        let spec = synth_spectrum(800.0, 0.3, 10.0, 0.8).unwrap();
        let fit = spec.slope_at(x, 0.5).unwrap();
        // The cubic term biases a least-squares slope by about 1.5e-4 here.
        assert_relative_eq!(fit, dip.derivative_at(x), max_relative = 5e-4);
    }
}
