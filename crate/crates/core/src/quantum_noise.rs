//! Photon-counting moments of twin beams and their degradation by loss.
//!
//! Optical fields are carried as first and second moments of the photon
//! counts collected in one integration window. Loss acts on those moments
//! through the beam-splitter rule (vacuum admixture appears only as the
//! `T(1 - T) * mean` partition-noise term), and a differential detector with
//! an electronic gain on the conjugate arm turns them into a noise variance
//! that is referenced to the shot-noise limit (SNL) of coherent light with
//! the same mean counts.

use serde::{Deserialize, Serialize};

use crate::error::{finite, non_negative, positive, Error, Result};

/// Relative slack allowed when checking Cauchy-Schwarz on floating-point input.
const CAUCHY_SCHWARZ_SLACK: f64 = 1e-12;

/// Quadratic leading coefficient below this fraction of the largest
/// coefficient is treated as degenerate.
const QUADRATIC_DEGENERACY: f64 = 1e-15;

/// Bracket used by the golden-section fallback of [`optimize_gain`].
const GAIN_SEARCH_UPPER: f64 = 10.0;

/// Converts a noise level in dB below the SNL to the linear noise ratio
/// `R = 10^(-dB/10)`.
pub fn db_to_linear(db: f64) -> Result<f64> {
    finite("squeezing (dB)", db)?;
    Ok(10f64.powf(-db / 10.0))
}

/// Inverse of [`db_to_linear`].
pub fn linear_to_db(ratio: f64) -> Result<f64> {
    positive("noise ratio", ratio)?;
    // Adding zero turns -0.0 into 0.0 at R = 1.
    Ok(-10.0 * ratio.log10() + 0.0)
}

/// Noise relative to the shot-noise limit, held both in dB (positive means
/// below the SNL) and as the linear ratio `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingLevel {
    db: f64,
    linear_r: f64,
}

impl SqueezingLevel {
    pub fn from_db(db: f64) -> Result<Self> {
        let linear_r = db_to_linear(db)?;
        if linear_r <= 0.0 || !linear_r.is_finite() {
            return Err(Error::OutOfRange {
                what: "squeezing (dB)",
                value: db,
                min: -3000.0,
                max: 3000.0,
            });
        }
        Ok(Self { db, linear_r })
    }

    pub fn from_ratio(linear_r: f64) -> Result<Self> {
        let db = linear_to_db(linear_r)?;
        // Re-derive the ratio so that `linear_r == 10^(-db/10)` holds bit-for-bit.
        Self::from_db(db)
    }

    pub fn db(&self) -> f64 {
        self.db
    }

    pub fn ratio(&self) -> f64 {
        self.linear_r
    }
}

/// Seeded phase-insensitive amplifier producing probe and conjugate beams.
///
/// `gain` is the amplifier gain `G` and `seed_flux` the seed photon rate
/// `n0` in photons per second. The seed flux is only a normalization: every
/// sensitivity figure computed from these moments is independent of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinBeamSource {
    gain: f64,
    seed_flux: f64,
}

impl TwinBeamSource {
    pub fn new(gain: f64, seed_flux: f64) -> Result<Self> {
        finite("amplifier gain", gain)?;
        if gain < 1.0 {
            return Err(Error::InvalidParameter {
                name: "amplifier gain",
                reason: format!("must be >= 1, got {gain}"),
            });
        }
        positive("seed flux", seed_flux)?;
        Ok(Self { gain, seed_flux })
    }

    /// Picks the gain whose ideal intensity-difference noise ratio
    /// `1/(2G - 1)` equals the requested squeezing.
    pub fn from_squeezing(level: SqueezingLevel, seed_flux: f64) -> Result<Self> {
        if level.ratio() > 1.0 {
            return Err(Error::InvalidParameter {
                name: "source squeezing",
                reason: format!(
                    "an amplifier cannot produce noise above the SNL ({} dB)",
                    level.db()
                ),
            });
        }
        Self::new(0.5 * (1.0 / level.ratio() + 1.0), seed_flux)
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn seed_flux(&self) -> f64 {
        self.seed_flux
    }

    /// Intensity-difference noise of the lossless beams relative to the SNL.
    pub fn ideal_noise_ratio(&self) -> f64 {
        1.0 / (2.0 * self.gain - 1.0)
    }

    pub fn moments(&self, window: f64) -> Result<TwoModeMoments> {
        source_moments(self, window)
    }
}

/// Twin-beam moments for an integration window of `window` seconds.
///
/// With `N0 = n0 * window` seed photons the amplifier outputs
/// `<p> = G N0`, `<c> = (G-1) N0`, `Var p = G(2G-1) N0`,
/// `Var c = (G-1)(2G-1) N0` and `Cov = ((2G-1)^2 - 1) N0 / 2`.
pub fn source_moments(source: &TwinBeamSource, window: f64) -> Result<TwoModeMoments> {
    positive("integration window", window)?;
    let g = source.gain;
    let n0 = source.seed_flux * window;
    let excess = 2.0 * g - 1.0;
    Ok(TwoModeMoments {
        mean_p: g * n0,
        mean_c: (g - 1.0) * n0,
        var_p: g * excess * n0,
        var_c: (g - 1.0) * excess * n0,
        cov: 0.5 * (excess * excess - 1.0) * n0,
    })
}

/// Means, variances and covariance of probe (`p`) and conjugate (`c`)
/// photon counts in one integration window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeMoments {
    mean_p: f64,
    mean_c: f64,
    var_p: f64,
    var_c: f64,
    cov: f64,
}

impl TwoModeMoments {
    /// Checked constructor: all means and variances non-negative and
    /// `cov^2 <= var_p * var_c`.
    pub fn new(mean_p: f64, mean_c: f64, var_p: f64, var_c: f64, cov: f64) -> Result<Self> {
        non_negative("probe mean", mean_p)?;
        non_negative("conjugate mean", mean_c)?;
        non_negative("probe variance", var_p)?;
        non_negative("conjugate variance", var_c)?;
        finite("covariance", cov)?;
        let bound = var_p * var_c;
        if cov * cov > bound * (1.0 + CAUCHY_SCHWARZ_SLACK) {
            return Err(Error::InvariantViolation(format!(
                "cov^2 = {} exceeds var_p * var_c = {bound}",
                cov * cov
            )));
        }
        Ok(Self {
            mean_p,
            mean_c,
            var_p,
            var_c,
            cov,
        })
    }

    /// Two independent coherent beams (Poissonian, uncorrelated).
    pub fn coherent(mean_p: f64, mean_c: f64) -> Result<Self> {
        Self::new(mean_p, mean_c, mean_p, mean_c, 0.0)
    }

    pub fn mean_p(&self) -> f64 {
        self.mean_p
    }

    pub fn mean_c(&self) -> f64 {
        self.mean_c
    }

    pub fn var_p(&self) -> f64 {
        self.var_p
    }

    pub fn var_c(&self) -> f64 {
        self.var_c
    }

    pub fn cov(&self) -> f64 {
        self.cov
    }

    /// Moments of a window `factor` times longer. For stationary white
    /// statistics every moment scales linearly with the window.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        positive("moment scale factor", factor)?;
        Ok(Self {
            mean_p: self.mean_p * factor,
            mean_c: self.mean_c * factor,
            var_p: self.var_p * factor,
            var_c: self.var_c * factor,
            cov: self.cov * factor,
        })
    }

    /// Probe Fano factor `Var p / <p>`; `None` for an empty arm.
    pub fn fano_p(&self) -> Option<f64> {
        (self.mean_p > 0.0).then(|| self.var_p / self.mean_p)
    }

    pub fn fano_c(&self) -> Option<f64> {
        (self.mean_c > 0.0).then(|| self.var_c / self.mean_c)
    }

    /// Normalized intensity-difference noise at unit electronic gain.
    pub fn difference_noise_ratio(&self) -> f64 {
        differential_noise(self, &DifferentialDetector::balanced()).ratio()
    }
}

/// Intensity transmission of a lossy element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    transmission: f64,
}

impl LossChannel {
    pub fn new(transmission: f64) -> Result<Self> {
        finite("transmission", transmission)?;
        if !(0.0..=1.0).contains(&transmission) {
            return Err(Error::OutOfRange {
                what: "transmission",
                value: transmission,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(Self { transmission })
    }

    pub fn lossless() -> Self {
        Self { transmission: 1.0 }
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    /// Two channels in series.
    pub fn then(&self, other: &LossChannel) -> LossChannel {
        LossChannel {
            transmission: self.transmission * other.transmission,
        }
    }
}

/// Propagates moments through independent loss on each arm:
/// `mean' = T mean`, `var' = T^2 var + T(1-T) mean`, `cov' = T_p T_c cov`.
pub fn apply_loss(
    m: &TwoModeMoments,
    probe_channel: &LossChannel,
    conj_channel: &LossChannel,
) -> TwoModeMoments {
    let tp = probe_channel.transmission;
    let tc = conj_channel.transmission;
    TwoModeMoments {
        mean_p: tp * m.mean_p,
        mean_c: tc * m.mean_c,
        var_p: tp * tp * m.var_p + tp * (1.0 - tp) * m.mean_p,
        var_c: tc * tc * m.var_c + tc * (1.0 - tc) * m.mean_c,
        cov: tp * tc * m.cov,
    }
}

/// Subtraction `p - g c` with electronic gain `g` on the conjugate detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialDetector {
    electronic_gain: f64,
}

impl DifferentialDetector {
    pub fn new(electronic_gain: f64) -> Result<Self> {
        non_negative("electronic gain", electronic_gain)?;
        Ok(Self { electronic_gain })
    }

    pub fn balanced() -> Self {
        Self {
            electronic_gain: 1.0,
        }
    }

    pub fn electronic_gain(&self) -> f64 {
        self.electronic_gain
    }
}

/// Variance of the differential signal and the SNL of the same detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialNoise {
    pub variance: f64,
    pub snl: f64,
}

impl DifferentialNoise {
    /// `variance / snl`; `NaN` when the SNL vanishes.
    pub fn ratio(&self) -> f64 {
        self.variance / self.snl
    }
}

/// `Var(p - g c)` and the variance `<p> + g^2 <c>` that coherent beams with
/// the same means would give through the same detector.
pub fn differential_noise(m: &TwoModeMoments, det: &DifferentialDetector) -> DifferentialNoise {
    let g = det.electronic_gain;
    DifferentialNoise {
        variance: m.var_p + g * g * m.var_c - 2.0 * g * m.cov,
        snl: m.mean_p + g * g * m.mean_c,
    }
}

/// Result of [`optimize_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainOptimum {
    pub electronic_gain: f64,
    pub residual: SqueezingLevel,
}

impl GainOptimum {
    pub fn detector(&self) -> DifferentialDetector {
        DifferentialDetector {
            electronic_gain: self.electronic_gain,
        }
    }
}

/// Chooses the conjugate gain `g >= 0` minimising `variance / snl`.
///
/// The stationary condition is the quadratic
/// `cov<c> g^2 + (Var c <p> - Var p <c>) g - cov <p> = 0`; its non-negative
/// roots and `g = 0` are compared directly. When the leading coefficient
/// degenerates the minimum is located by golden-section search on `[0, 10]`.
/// An identically vanishing stationary condition (independent coherent
/// beams) means every gain is optimal, and `g = 1` is returned.
pub fn optimize_gain(m: &TwoModeMoments) -> Result<GainOptimum> {
    if m.mean_p == 0.0 && m.mean_c == 0.0 {
        return Err(Error::DegenerateMoments(
            "both arms are empty; the shot-noise reference vanishes".into(),
        ));
    }
    let ratio_at =
        |g: f64| differential_noise(m, &DifferentialDetector { electronic_gain: g }).ratio();
    let finish = |g: f64| -> Result<GainOptimum> {
        let ratio = ratio_at(g);
        let residual = SqueezingLevel::from_ratio(ratio).map_err(|_| {
            Error::DegenerateMoments(format!("residual noise ratio {ratio} at g = {g}"))
        })?;
        Ok(GainOptimum {
            electronic_gain: g,
            residual,
        })
    };

    if m.mean_c == 0.0 {
        return finish(0.0);
    }

    let a = m.cov * m.mean_c;
    let b = m.var_c * m.mean_p - m.var_p * m.mean_c;
    let c = -m.cov * m.mean_p;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return finish(1.0);
    }

    let mut candidates = Vec::with_capacity(3);
    if m.mean_p > 0.0 {
        candidates.push(0.0);
    }
    if a.abs() < QUADRATIC_DEGENERACY * scale {
        candidates.push(golden_section(ratio_at, 0.0, GAIN_SEARCH_UPPER));
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let mut roots = vec![q / a];
            if q != 0.0 {
                roots.push(c / q);
            }
            candidates.extend(roots.into_iter().filter(|r| r.is_finite() && *r >= 0.0));
        }
        if candidates.len() <= 1 {
            candidates.push(golden_section(ratio_at, 0.0, GAIN_SEARCH_UPPER));
        }
    }

    let best = candidates
        .into_iter()
        .filter(|g| ratio_at(*g).is_finite())
        .min_by(|x, y| ratio_at(*x).total_cmp(&ratio_at(*y)))
        .ok_or_else(|| Error::DegenerateMoments("no admissible electronic gain".into()))?;
    finish(best)
}

fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}
