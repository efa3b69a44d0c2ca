//! Reproduction of the headline numbers as a pass/fail table.
//!
//! Each check pins its own tolerance. The table is what `replicate-paper`
//! prints and what the acceptance tests assert on.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::{
    chain_efficiency, fit, infer_stage_efficiency, synthesize_sweep, LossChain, SweepPoint,
};
use crate::dispersion::{
    degradation_phase, dispersion_phase, phase_maintained_band, wavelength_to_frequency,
    DispersionModel, FrequencyBand,
};
use crate::error::Result;
use crate::lockloop::{run_lock, LockLoopConfig, LockStatus};
use crate::measurement::{
    effective_phase_deviation, measured_from_true, required_gain, true_from_measured,
    GainResolution, OpaGain,
};
use crate::scenario::{GridSpec, ScenarioConfig};
use crate::sideband::{variance_at_phase, PhaseAngle, QuadLevels};
use crate::spectrum::{estimate_dispersion, spectrum, ExtremumOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    /// `None` for informational rows.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Outcome {
    fn new(id: u8, title: &'static str, passed: bool, detail: String) -> Self {
        Outcome {
            id,
            title,
            passed: Some(passed),
            detail,
        }
    }

    pub fn verdict(&self) -> &'static str {
        match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "N/A",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {} -- {}",
            self.verdict(),
            self.id,
            self.title,
            self.detail
        )
    }
}

pub const REQUIRED_GAIN_TOL_DB: f64 = 0.05;
pub const RANDOM_TRIPLES: usize = 10_000;

/// Check 1. Smallest whole-dB gain reproducing -3.0 dB to one decimal.
pub fn finite_gain_cases() -> Result<Outcome> {
    let steps = GainResolution::Steps { step_db: 1.0 };
    let low = required_gain(
        &QuadLevels::from_db(-3.0, 3.0)?,
        REQUIRED_GAIN_TOL_DB,
        steps,
    )?;
    let high = required_gain(
        &QuadLevels::from_db(-3.0, 15.0)?,
        REQUIRED_GAIN_TOL_DB,
        steps,
    )?;
    let c_low = required_gain(
        &QuadLevels::from_db(-3.0, 3.0)?,
        REQUIRED_GAIN_TOL_DB,
        GainResolution::Continuous,
    )?;
    let c_high = required_gain(
        &QuadLevels::from_db(-3.0, 15.0)?,
        REQUIRED_GAIN_TOL_DB,
        GainResolution::Continuous,
    )?;
    let ok = (low.linear() - 20.0).abs() <= 1.0 && (high.linear() - 80.0).abs() <= 3.0;
    Ok(Outcome::new(
        1,
        "finite-gain worked cases",
        ok,
        format!(
            "(-3,+3) dB -> G={:.2} ({:.0} dB); (-3,+15) dB -> G={:.2} ({:.0} dB); \
             continuous threshold {:.2} / {:.2}",
            low.linear(),
            low.db(),
            high.linear(),
            high.db(),
            c_low.linear(),
            c_high.linear()
        ),
    ))
}

/// Check 2. Effective phase deviation at 23 dB.
pub fn effective_phase_at_200() -> Result<Outcome> {
    let deg = effective_phase_deviation(OpaGain::new(200.0)?).to_degrees();
    let shown = format!("{deg:.1}");
    let ok = (deg - 0.286).abs() <= 0.01 && shown == "0.3";
    Ok(Outcome::new(
        2,
        "effective phase deviation at G=200",
        ok,
        format!("{deg:.4} deg, displayed {shown} deg"),
    ))
}

fn random_levels(rng: &mut ChaCha8Rng) -> Result<QuadLevels> {
    let rm = 10f64.powf(rng.random_range(-2.0..0.0));
    let rp = 10f64.powf(rng.random_range(0.0..2.0));
    QuadLevels::new(rm, rp)
}

/// Check 3. Correction inverts the finite-gain measurement.
pub fn correction_inversion(seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_TRIPLES {
        let lv = random_levels(&mut rng)?;
        let g = OpaGain::new(10f64.powf(rng.random_range(0.05..3.0)))?;
        let back = true_from_measured(&measured_from_true(&lv, g), g)?;
        worst = worst
            .max((back.r_minus() - lv.r_minus()).abs() / lv.r_minus())
            .max((back.r_plus() - lv.r_plus()).abs() / lv.r_plus());
    }
    Ok(Outcome::new(
        3,
        "correction inversion",
        worst < 1e-9,
        format!("{RANDOM_TRIPLES} triples, worst relative error {worst:.2e}"),
    ))
}

/// Check 4. Finite gain acts like a phase error of theta_eff.
pub fn phase_equivalence(seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for _ in 0..RANDOM_TRIPLES {
        let lv = random_levels(&mut rng)?;
        let g = OpaGain::new(10f64.powf(rng.random_range(-1.0..3.0)))?;
        let meas = measured_from_true(&lv, g).r_minus_meas();
        let (vx, _) = variance_at_phase(&lv, PhaseAngle::new(effective_phase_deviation(g))?);
        worst = worst.max((meas - vx).abs() / vx);
    }
    Ok(Outcome::new(
        4,
        "finite gain == phase deviation",
        worst < 1e-12,
        format!("{RANDOM_TRIPLES} triples, worst relative error {worst:.2e}"),
    ))
}

/// Check 5. Loss budget of the homodyne setup.
pub fn loss_budget() -> Result<Outcome> {
    let chain = LossChain::new()
        .with("beamsplitter excess", 0.86)?
        .with("circuit noise", 0.98)?
        .with("detector QE", 0.93)?;
    let det = chain_efficiency(&chain);
    let opa2 = infer_stage_efficiency(1.0 - 0.487, 1.0 - 0.27)?;
    let opa1_loss = 1.0 - infer_stage_efficiency(1.0 - 0.425, det)?;
    let ok = (det - 0.783804).abs() < 1e-12
        && format!("{:.0}", det * 100.0) == "78"
        && (opa2 - 0.703).abs() < 5e-4
        && format!("{opa2:.2}") == "0.70"
        && (opa1_loss * 100.0 - 27.0).abs() <= 1.0;
    Ok(Outcome::new(
        5,
        "loss chain arithmetic",
        ok,
        format!(
            "detection {:.4} ({:.0}%), OPA2 efficiency {:.3} ({:.2}), OPA1 loss {:.1}%",
            det,
            det * 100.0,
            opa2,
            opa2,
            opa1_loss * 100.0
        ),
    ))
}

/// The three all-optical levels read off the spectra at 50/100/200 mW.
pub fn all_optical_sweep() -> Vec<SweepPoint> {
    vec![
        SweepPoint {
            pump: 0.05,
            r_minus_db: -2.7,
            r_plus_db: 5.6,
        },
        SweepPoint {
            pump: 0.1,
            r_minus_db: -3.2,
            r_plus_db: 9.9,
        },
        SweepPoint {
            pump: 0.2,
            r_minus_db: -2.2,
            r_plus_db: 14.9,
        },
    ]
}

/// Check 6. Exact recovery on synthetic data, and the all-optical sweep
/// against the reference (a, L).
pub fn calibration_fit() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for &(a, l) in &[(19.1, 0.425), (20.1, 0.487), (8.0, 0.2), (45.0, 0.65)] {
        let f = fit(&synthesize_sweep(a, l, &[0.05, 0.1, 0.2])?)?;
        worst = worst.max((f.a - a).abs() / a).max((f.l - l).abs() / l);
    }
    let f = fit(&all_optical_sweep())?;
    let a_ok = (f.a - 20.1).abs() <= 0.1 * 20.1;
    let l_ok = (f.l - 0.487).abs() <= 0.03;
    Ok(Outcome::new(
        6,
        "calibration fit",
        worst < 1e-5 && a_ok && l_ok,
        format!(
            "synthetic worst rel. error {worst:.1e}; all-optical a = {:.2} /W (+-{:.2}, {}), \
             L = {:.3} (+-{:.3}, {}), rms {:.2} dB",
            f.a,
            f.sigma_a(),
            if a_ok { "ok" } else { "outside +-10% of 20.1" },
            f.l,
            f.sigma_l(),
            if l_ok { "ok" } else { "outside 0.487+-0.03" },
            f.residual_rms
        ),
    ))
}

/// Check 7. Dispersion recovered from synthesized ripples.
pub fn dispersion_round_trip(cfg: &ScenarioConfig) -> Result<Outcome> {
    let grid = cfg.grid.unwrap_or(GridSpec::DEFAULT).wavelengths()?;
    let f0 = cfg.dispersion.map(|d| d.f0).unwrap_or(194.0);
    let levels = cfg.require_levels()?;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [0.0045, 0.033] {
        for phi0 in [FRAC_PI_2, 0.0, 1.0] {
            let model = DispersionModel::new(d, f0, phi0)?;
            let est = estimate_dispersion(
                &spectrum(&model, &levels, &grid)?,
                f0,
                &ExtremumOptions::default(),
            )?;
            let rel = (est.d - d).abs() / d;
            worst = worst.max(rel);
            if phi0 == FRAC_PI_2 {
                parts.push(format!("D={d} -> {:.5}", est.d));
            }
        }
    }
    Ok(Outcome::new(
        7,
        "dispersion round trip",
        worst <= 0.03,
        format!(
            "{}; worst relative error {:.2}%",
            parts.join(", "),
            worst * 100.0
        ),
    ))
}

/// Check 8. Phase-maintained band around a 1545 nm lock with the DCF levels.
pub fn maintained_band() -> Result<Outcome> {
    let levels = QuadLevels::from_db(-1.2, 7.1)?;
    let max_dev = degradation_phase(&levels, 1.0)?;
    let lock_f = wavelength_to_frequency(1545.0);
    let limits = FrequencyBand {
        lo: wavelength_to_frequency(GridSpec::DEFAULT.stop_nm),
        hi: wavelength_to_frequency(GridSpec::DEFAULT.start_nm),
    };
    let reach = |d: f64| -> Result<f64> {
        let b = phase_maintained_band(
            &DispersionModel::new(d, 194.0, 0.0)?,
            lock_f,
            max_dev,
            limits,
        )?;
        Ok(b.hi - lock_f)
    };
    let (with_dcf, without) = (reach(0.0045)?, reach(0.033)?);
    Ok(Outcome::new(
        8,
        "phase maintained over 1 THz",
        with_dcf >= 1.0 && without < 1.0,
        format!(
            "1 dB threshold {max_dev:.4} rad; blue-side reach {with_dcf:.3} THz at D=0.0045, \
             {without:.3} THz at D=0.033"
        ),
    ))
}

/// Check 9. Integral lock behaviour.
pub fn lock_loop(seed: u64) -> Result<Outcome> {
    let levels = QuadLevels::from_db(-3.2, 9.9)?;
    let model = DispersionModel::new(0.033, 194.0, FRAC_PI_4 + 0.3)?;

    let cfg = LockLoopConfig::mid_slope(&levels, 1545.0);
    let mid = run_lock(&cfg, &model, &levels, seed)?;
    let errs: Vec<f64> = mid
        .trace
        .iter()
        .map(|s| (cfg.target - s.pd3_true).abs())
        .collect();
    let monotone = errs.windows(2).all(|w| w[1] <= w[0]);
    let mid_ok = mid.locked && monotone && mid.steady_state_rms_error < 1e-6;

    let mut peak_cfg = LockLoopConfig::new(levels.r_plus(), 1545.0);
    let quiet_peak = run_lock(&peak_cfg, &model, &levels, seed)?;
    peak_cfg.noise_rms = 0.01 * levels.span();
    let noisy_peak = run_lock(&peak_cfg, &model, &levels, seed)?;
    let peak_ok = !quiet_peak.locked && !noisy_peak.locked;

    let other = LockLoopConfig::mid_slope(&levels, 1541.0);
    let shifted = run_lock(&other, &model, &levels, seed)?;
    let predicted = -(dispersion_phase(&model, wavelength_to_frequency(1541.0))
        - dispersion_phase(&model, wavelength_to_frequency(1545.0)));
    let moved = shifted.steady_phase() - mid.steady_phase();
    let shift_ok = shifted.locked && (moved - predicted).abs() <= 0.01 * predicted.abs();

    Ok(Outcome::new(
        9,
        "integral phase lock",
        mid_ok && peak_ok && shift_ok,
        format!(
            "mid-slope: {} in {} steps, rms {:.1e}, monotone {}; peak target: {} / {} (noisy); \
             1545->1541 nm phase shift {:.4} rad vs {:.4} predicted",
            mid.status.as_str(),
            mid.settle_step.map_or("-".into(), |s| s.to_string()),
            mid.steady_state_rms_error,
            monotone,
            quiet_peak.status.as_str(),
            noisy_peak.status.as_str(),
            moved,
            predicted
        ),
    ))
}

pub fn raw_traces_note() -> Outcome {
    Outcome {
        id: 10,
        title: "measured optical spectra",
        passed: None,
        detail: "experimental traces are not reproducible here; covered by checks 6-8".into(),
    }
}

/// Run every check.
pub fn run_all(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Outcome>> {
    Ok(vec![
        finite_gain_cases()?,
        effective_phase_at_200()?,
        correction_inversion(seed)?,
        phase_equivalence(seed)?,
        loss_budget()?,
        calibration_fit()?,
        dispersion_round_trip(cfg)?,
        maintained_band()?,
        lock_loop(seed)?,
        raw_traces_note(),
    ])
}

/// Lock status names, re-exported for report formatting.
pub fn status_name(s: LockStatus) -> &'static str {
    s.as_str()
}
