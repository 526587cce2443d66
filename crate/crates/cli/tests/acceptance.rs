//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test --test acceptance`. Exits non-zero when any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use plasmosense::experiment::{
    budget_estimate, enhancement, enhancement_from_ratio, photon_flux, run_ramp,
    sensitivity_report, single_coherent_equivalent, ProbeKind, RampConfiguration, RampMode,
    RampScenario, DEFAULT_CONFIDENCE,
};
use plasmosense::oracle::{
    check_difference_noise, estimate_spectrum, sample_counts, AveragingMode, TimeSeriesConfig,
};
use plasmosense::plasmonic::{dispersion_s, MetalPermittivity, NanoholeGeometry};
use plasmosense::quantum_noise::{
    apply_loss, optimize_gain, LossChannel, SqueezingLevel, TwinBeamSource, TwoModeMoments,
};
use plasmosense::signal_chain::{peak_to_snr, predicted_snr, window_counts, SnrEstimate};

/// Seed of the Monte Carlo criterion.
const ORACLE_SEED: u64 = 2024;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn twin(db: f64, n0: f64) -> TwoModeMoments {
    TwinBeamSource::from_squeezing(SqueezingLevel::from_db(db).unwrap(), n0)
        .unwrap()
        .moments(1.0)
        .unwrap()
}

fn squeezing_degradation() -> Outcome {
    let m = apply_loss(
        &twin(9.0, 1e12),
        &LossChannel::new(0.66 * 0.73).unwrap(),
        &LossChannel::new(0.95).unwrap(),
    );
    let opt = optimize_gain(&m).unwrap();
    let db = opt.residual.db();
    let g = opt.electronic_gain;
    outcome(
        within(db, 4.0, 0.3) && within(g, 0.60, 0.03),
        format!("residual {db:.4} dB (4.0 +/- 0.3), g_opt {g:.5} (0.60 +/- 0.03)"),
    )
}

fn enhancement_formula() -> Outcome {
    let a = enhancement_from_ratio(0.3981).unwrap();
    let b = enhancement_from_ratio(0.1259).unwrap();
    outcome(
        within(a, 0.58, 0.01) && within(b, 1.82, 0.02),
        format!(
            "R=0.3981 -> {:.2} % (58 +/- 1), R=0.1259 -> {:.2} % (182 +/- 2)",
            100.0 * a,
            100.0 * b
        ),
    )
}

fn dispersion() -> Outcome {
    let s = dispersion_s(
        &NanoholeGeometry::new(400.0, 1, 0, 1.0).unwrap(),
        &MetalPermittivity::new(-24.5, 1.83).unwrap(),
    )
    .unwrap();
    outcome(
        within(s, 425.0, 3.0),
        format!("S = {s:.3} nm/RIU (425 +/- 3)"),
    )
}

fn budget() -> Outcome {
    // 1.5e14 counts in the 1 Hz window: flux 3e14 photons/s.
    let b = budget_estimate(0.66, 2.5, 3e14, 500.0, 1.0)
        .unwrap()
        .dn_min_per_rthz;
    let ratio = b / 1e-9;
    outcome(
        within(b, 1.19e-9, 0.01e-9) && (1.0 / 1.5..=1.5).contains(&ratio),
        format!("dn_min {b:.4e} RIU/rtHz (1.19e-9 +/- 0.01e-9; {ratio:.3}x the 1e-9 estimate, limit 1.5x)"),
    )
}

fn flux() -> Outcome {
    let f = photon_flux(70e-6, 795.0).unwrap();
    let w = window_counts(f, 1.0).unwrap();
    outcome(
        within(f / 2.80e14, 1.0, 0.01) && within(w / 1.40e14, 1.0, 0.01),
        format!("flux {f:.5e} /s (2.80e14 +/- 1%), 1 Hz window {w:.5e} (1.40e14 +/- 1%)"),
    )
}

fn single_beam() -> Outcome {
    let single = single_coherent_equivalent(9.6e-10).unwrap();
    let e = enhancement(single, 5.5e-10).unwrap();
    outcome(
        within(single / 6.79e-10, 1.0, 0.02) && within(e, 0.235, 0.01),
        format!(
            "single {single:.4e} (6.79e-10 +/- 2%), enhancement vs twin {:.2} % (23.5 +/- 1)",
            100.0 * e
        ),
    )
}

fn end_to_end() -> Outcome {
    let s = RampScenario::reference().unwrap();
    let ramp = run_ramp(
        &s,
        &RampConfiguration::standard_set(),
        RampMode::Deterministic,
    )
    .unwrap();
    let report = sensitivity_report(&ramp, DEFAULT_CONFIDENCE).unwrap();
    let coh = report.dn_min(ProbeKind::MatchedCoherent).unwrap();
    let r = ramp.trace(ProbeKind::TwinBeams).unwrap().noise.ratio();
    let twin_pts = &ramp.trace(ProbeKind::TwinBeams).unwrap().points;
    let coh_pts = &ramp.trace(ProbeKind::MatchedCoherent).unwrap().points;
    let last = twin_pts.len() - 1;
    let snr_ratio = twin_pts[last].snr_amplitude / coh_pts[last].snr_amplitude;
    let expected = 1.0 / r.sqrt();
    let e = report.enhancement_vs_balanced.unwrap();
    let factor = coh / 8.6e-10;
    outcome(
        (0.5..=2.0).contains(&factor) && within(snr_ratio / expected, 1.0, 0.02) && within(e, 0.56, 0.03),
        format!(
            "coherent {coh:.4e} RIU/rtHz ({factor:.3}x 8.6e-10, limit 2x), SNR ratio {snr_ratio:.5} vs 1/sqrt(R) {expected:.5} (+/- 2%), enhancement {:.2} % (56 +/- 3)",
            100.0 * e
        ),
    )
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let per_sample = {
        let m = twin(9.0, 1.0);
        m.scaled(1e6 / m.mean_p()).unwrap()
    };
    let samples_per_point = 40_000;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    let mut stream = 0;
    for tp in [0.3, 0.6, 0.9] {
        for tc in [0.5, 0.75, 1.0] {
            let m = apply_loss(
                &per_sample,
                &LossChannel::new(tp).unwrap(),
                &LossChannel::new(tc).unwrap(),
            );
            for g in [0.4, 0.7, 1.0] {
                let c =
                    check_difference_noise(&m, g, samples_per_point, ORACLE_SEED, stream).unwrap();
                worst = worst.max(c.z_score().abs());
                total += c.samples;
                stream += 1;
            }
        }
    }
    let m = apply_loss(
        &per_sample,
        &LossChannel::new(0.482).unwrap(),
        &LossChannel::new(0.95).unwrap(),
    );
    let g = optimize_gain(&m).unwrap().electronic_gain;
    let ts = TimeSeriesConfig::new(65536.0, 16.0, ORACLE_SEED, None).unwrap();
    let series = sample_counts(&m, &ts).unwrap();
    let d = series.difference(g);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    let spec = estimate_spectrum(&d, ts.sample_rate_hz, 4096, AveragingMode::Power).unwrap();
    let parseval = spec.integral() / var - 1.0;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 3.0 && parseval.abs() <= 0.02 && total >= 1_000_000 && secs < 60.0,
        format!(
            "27 grid points, {total} samples, worst |z| {worst:.3} (<= 3), Parseval error {parseval:.2e} (<= 2%), {secs:.2} s (< 60 s)"
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn properties() -> Outcome {
    let mut worst: f64 = 0.0;
    let grid = [0.0, 0.13, 0.482, 0.73, 0.95, 1.0];
    for db in [0.5, 3.0, 9.0, 15.0] {
        let m = twin(db, 1e9);
        for &t1 in &grid {
            for &t2 in &grid {
                let (a, b) = (LossChannel::new(t1).unwrap(), LossChannel::new(t2).unwrap());
                let seq = apply_loss(&apply_loss(&m, &a, &b), &b, &a);
                let once = apply_loss(&m, &a.then(&b), &b.then(&a));
                let scale = m.var_p();
                worst = worst
                    .max(rel(seq.mean_p(), once.mean_p()))
                    .max(rel(seq.mean_c(), once.mean_c()))
                    .max((seq.var_p() - once.var_p()).abs() / scale)
                    .max((seq.var_c() - once.var_c()).abs() / scale)
                    .max((seq.cov() - once.cov()).abs() / scale);
                if seq.cov().powi(2) > seq.var_p() * seq.var_c() * (1.0 + 1e-12) {
                    worst = f64::INFINITY;
                }
                let coh = apply_loss(&TwoModeMoments::coherent(1e9, 3e8).unwrap(), &a, &b);
                worst = worst
                    .max(rel(coh.var_p(), coh.mean_p()))
                    .max(rel(coh.var_c(), coh.mean_c()))
                    .max(coh.cov().abs());
            }
        }
    }
    for n in [1.0, 10.0, 500.0, 1e4] {
        let one = predicted_snr(1e5, 1e12, n).unwrap().amplitude();
        let four = predicted_snr(1e5, 1e12, 4.0 * n).unwrap().amplitude();
        worst = worst.max(rel(four, 2.0 * one));
    }
    let mut last = f64::NEG_INFINITY;
    for i in 1..=600 {
        let s = peak_to_snr(-40.0 + 0.05 * i as f64, -40.0, 0.0)
            .unwrap()
            .db();
        if s < last {
            worst = f64::INFINITY;
        }
        last = s;
    }
    let identity = peak_to_snr(10.0 * 2f64.log10(), 0.0, 0.0)
        .unwrap()
        .db()
        .abs();
    worst = worst.max(identity);
    for i in -60..=60 {
        let db = i as f64;
        let e = SnrEstimate::from_db(db).unwrap();
        let back = SnrEstimate::from_amplitude(e.amplitude()).unwrap();
        worst = worst.max((back.db() - db).abs() / db.abs().max(1.0));
    }
    outcome(
        worst <= 1e-9,
        format!("loss composition, coherent fixed point, Cauchy-Schwarz, sqrt(N), monotonicity, 3.0103 dB identity, dual representation: worst deviation {worst:.2e} (<= 1e-9)"),
    )
}

fn cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_plasmosense"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("PLASMOSENSE_OUT_DIR")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn reproducibility() -> Outcome {
    let runs: [&[&str]; 7] = [
        &["budget", "--format", "json"],
        &["squeezing", "--format", "json"],
        &["calibrate", "--format", "json"],
        &["ramp", "--format", "json"],
        &["ramp", "--format", "csv"],
        &[
            "ramp",
            "--format",
            "json",
            "--seed",
            "7",
            "--set",
            "ramp.mode=stochastic",
        ],
        &["validate", "--format", "json", "--seed", "3"],
    ];
    let mut identical = 0;
    for args in runs {
        if cli(args) == cli(args) {
            identical += 1;
        }
    }
    outcome(
        identical == runs.len(),
        format!(
            "{identical}/{} command runs byte-identical on repetition (5 deterministic, 2 seeded)",
            runs.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("squeezing degradation", squeezing_degradation),
        ("enhancement formula", enhancement_formula),
        ("dispersion", dispersion),
        ("budget", budget),
        ("photon flux", flux),
        ("balanced-to-single conversion", single_beam),
        ("end-to-end ramp", end_to_end),
        ("oracle equivalence", oracle),
        ("property suites", properties),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
