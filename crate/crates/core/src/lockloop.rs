//! Discrete-time simulation of the integral phase lock.
//!
//! A bandpass filter picks one wavelength of the rippled output; its
//! photodetector reading is compared with a target, the difference is
//! integrated, and the integral drives the phase modulator. Because the
//! dispersion phase depends on wavelength, moving the filter moves the
//! phase at which the loop settles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dispersion::{dispersion_phase, wavelength_to_frequency, DispersionModel};
use crate::error::{ensure, Error, Result};
use crate::sideband::QuadLevels;
use crate::spectrum::level_at_phase;

/// Below this fraction of the mid-slope sensitivity the loop has
/// effectively no restoring force.
pub const DEFAULT_MIN_SLOPE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LockLoopConfig {
    /// Integrator gain magnitude, 1/(ratio s). The sign is picked at startup.
    pub ki: f64,
    /// s
    pub dt: f64,
    /// Target PD3 reading, vacuum-normalized.
    pub target: f64,
    /// Filter center, nm.
    pub lock_wavelength_nm: f64,
    /// Additive Gaussian noise on the PD3 reading (std), ratio.
    pub noise_rms: f64,
    /// Random-walk phase drift, rad/sqrt(s).
    pub drift_rate: f64,
    pub max_steps: usize,
    /// Lock tolerance on |target - PD3|; `None` means 1% of R+ - R-.
    pub tolerance: Option<f64>,
    /// Drift is switched off from this step on.
    pub drift_until: Option<usize>,
    pub min_slope_fraction: f64,
}

impl LockLoopConfig {
    pub fn new(target: f64, lock_wavelength_nm: f64) -> Self {
        LockLoopConfig {
            ki: 1e3,
            dt: 1e-5,
            target,
            lock_wavelength_nm,
            noise_rms: 0.0,
            drift_rate: 0.0,
            max_steps: 20_000,
            tolerance: None,
            drift_until: None,
            min_slope_fraction: DEFAULT_MIN_SLOPE_FRACTION,
        }
    }

    /// Target halfway between R- and R+.
    pub fn mid_slope(levels: &QuadLevels, lock_wavelength_nm: f64) -> Self {
        LockLoopConfig::new(
            0.5 * (levels.r_minus() + levels.r_plus()),
            lock_wavelength_nm,
        )
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.ki.is_finite() && self.ki > 0.0,
            "ki",
            self.ki,
            "must be > 0",
        )?;
        ensure(
            self.dt.is_finite() && self.dt > 0.0,
            "dt",
            self.dt,
            "must be > 0",
        )?;
        ensure(
            self.target.is_finite(),
            "target",
            self.target,
            "must be finite",
        )?;
        ensure(
            self.lock_wavelength_nm.is_finite() && self.lock_wavelength_nm > 0.0,
            "lock_wavelength_nm",
            self.lock_wavelength_nm,
            "must be > 0",
        )?;
        ensure(
            self.noise_rms.is_finite() && self.noise_rms >= 0.0,
            "noise_rms",
            self.noise_rms,
            "must be >= 0",
        )?;
        ensure(
            self.drift_rate.is_finite() && self.drift_rate >= 0.0,
            "drift_rate",
            self.drift_rate,
            "must be >= 0",
        )?;
        ensure(
            self.max_steps >= 1,
            "max_steps",
            self.max_steps as f64,
            "must be >= 1",
        )?;
        if let Some(t) = self.tolerance {
            ensure(t.is_finite() && t > 0.0, "tolerance", t, "must be > 0")?;
        }
        ensure(
            (0.0..=1.0).contains(&self.min_slope_fraction),
            "min_slope_fraction",
            self.min_slope_fraction,
            "must lie in [0, 1]",
        )
    }

    pub fn tolerance_for(&self, levels: &QuadLevels) -> f64 {
        self.tolerance.unwrap_or(0.01 * levels.span())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockLoopState {
    pub step: usize,
    pub integrator: f64,
    pub phi0_actuated: f64,
    pub phi_drift: f64,
    /// Noisy reading seen by the controller.
    pub pd3_reading: f64,
    /// Noise-free detector level.
    pub pd3_true: f64,
}

/// Random plant disturbances applied in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs {
    pub drift_increment: f64,
    pub noise: f64,
}

/// The optical path seen by the lock: dispersion plus the squeezed levels.
/// `model.phi0` is the static phase offset of the path before actuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockPlant {
    pub model: DispersionModel,
    pub levels: QuadLevels,
}

impl LockPlant {
    pub fn reading(&self, lock_wavelength_nm: f64, actuated: f64, drift: f64) -> f64 {
        pd3_model(
            &self.model,
            &self.levels,
            lock_wavelength_nm,
            self.model.phi0 + actuated + drift,
        )
    }
}

/// Filtered detector level at `lock_wavelength_nm` with total phase offset
/// `phi_total` in place of phi0. Amplified vacuum reads 1.
pub fn pd3_model(
    model: &DispersionModel,
    levels: &QuadLevels,
    lock_wavelength_nm: f64,
    phi_total: f64,
) -> f64 {
    let f = wavelength_to_frequency(lock_wavelength_nm);
    level_at_phase(levels, dispersion_phase(model, f) + phi_total)
}

/// Advance the loop by one sample. `gain_sign` is +1 or -1.
pub fn step(
    config: &LockLoopConfig,
    plant: &LockPlant,
    state: &LockLoopState,
    gain_sign: f64,
    inputs: PlantInputs,
) -> Result<LockLoopState> {
    let error = config.target - state.pd3_reading;
    let integrator = state.integrator + gain_sign * config.ki * error * config.dt;
    if !integrator.is_finite() {
        return Err(Error::LockUnstable {
            step: state.step + 1,
        });
    }
    let phi_drift = state.phi_drift + inputs.drift_increment;
    let pd3_true = plant.reading(config.lock_wavelength_nm, integrator, phi_drift);
    Ok(LockLoopState {
        step: state.step + 1,
        integrator,
        phi0_actuated: integrator,
        phi_drift,
        pd3_reading: pd3_true + inputs.noise,
        pd3_true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockStatus {
    Locked,
    /// Error is small but the operating point has no slope to push against.
    Marginal,
    /// Linearized loop gain above 2: the loop overshoots and never settles.
    Unstable,
    Unlocked,
}

impl LockStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            LockStatus::Locked => "locked",
            LockStatus::Marginal => "marginal",
            LockStatus::Unstable => "unstable",
            LockStatus::Unlocked => "unlocked",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockResult {
    pub locked: bool,
    pub status: LockStatus,
    pub settle_step: Option<usize>,
    /// RMS of the noise-free error over the last 20% of steps.
    pub steady_state_rms_error: f64,
    pub tolerance: f64,
    /// |d PD3 / d phi| at the target, relative to R+ - R-.
    pub operating_slope_fraction: f64,
    /// ki dt |d PD3 / d phi| at the target.
    pub loop_gain: f64,
    pub gain_sign: f64,
    pub trace: Vec<LockLoopState>,
}

impl LockResult {
    pub fn final_state(&self) -> &LockLoopState {
        self.trace.last().expect("trace holds the initial state")
    }

    /// Mean actuated phase over the last 20% of steps.
    pub fn steady_phase(&self) -> f64 {
        let tail = steady_tail(&self.trace);
        tail.iter().map(|s| s.phi0_actuated).sum::<f64>() / tail.len() as f64
    }
}

fn steady_tail(trace: &[LockLoopState]) -> &[LockLoopState] {
    let n = trace.len();
    let keep = (n / 5).max(1);
    &trace[n - keep..]
}

/// |dR/dphi| where R(phi) crosses `target`, as a fraction of R+ - R-.
/// Zero when the target lies outside [R-, R+].
pub fn operating_slope_fraction(levels: &QuadLevels, target: f64) -> f64 {
    let span = levels.span();
    if span <= 0.0 {
        return 0.0;
    }
    let c = (target - levels.r_minus()) / span;
    if !(0.0..=1.0).contains(&c) {
        return 0.0;
    }
    2.0 * (c * (1.0 - c)).sqrt()
}

/// Run the lock from an unactuated start. Deterministic for a given seed.
pub fn run_lock(
    config: &LockLoopConfig,
    model: &DispersionModel,
    levels: &QuadLevels,
    seed: u64,
) -> Result<LockResult> {
    config.validate()?;
    model.validate()?;
    let plant = LockPlant {
        model: *model,
        levels: *levels,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };

    let lambda = config.lock_wavelength_nm;
    let pd3_true = plant.reading(lambda, 0.0, 0.0);
    let mut state = LockLoopState {
        step: 0,
        integrator: 0.0,
        phi0_actuated: 0.0,
        phi_drift: 0.0,
        pd3_reading: pd3_true + config.noise_rms * gauss(),
        pd3_true,
    };

    // probe the slope sign with a small actuator nudge
    const PROBE: f64 = 1e-4;
    let probe = plant.reading(lambda, PROBE, 0.0) - plant.reading(lambda, -PROBE, 0.0);
    let gain_sign = if probe < 0.0 { -1.0 } else { 1.0 };

    let drift_std = config.drift_rate * config.dt.sqrt();
    let mut trace = Vec::with_capacity(config.max_steps + 1);
    trace.push(state);
    for n in 0..config.max_steps {
        let drifting = config.drift_until.is_none_or(|stop| n < stop);
        let inputs = PlantInputs {
            drift_increment: if drifting { drift_std * gauss() } else { 0.0 },
            noise: config.noise_rms * gauss(),
        };
        state = step(config, &plant, &state, gain_sign, inputs)?;
        trace.push(state);
    }

    let tolerance = config.tolerance_for(levels);
    let err = |s: &LockLoopState| config.target - s.pd3_true;
    let tail = steady_tail(&trace);
    let rms = (tail.iter().map(|s| err(s).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    let settle_step = match trace.iter().rposition(|s| err(s).abs() > tolerance) {
        None => Some(0),
        Some(i) if i + 1 < trace.len() => Some(trace[i + 1].step),
        Some(_) => None,
    };
    let slope_fraction = operating_slope_fraction(levels, config.target);
    let loop_gain = config.ki * config.dt * slope_fraction * levels.span();

    let status = if rms <= tolerance && settle_step.is_some() {
        if slope_fraction >= config.min_slope_fraction {
            LockStatus::Locked
        } else {
            LockStatus::Marginal
        }
    } else if loop_gain > 2.0 {
        LockStatus::Unstable
    } else {
        LockStatus::Unlocked
    };

    Ok(LockResult {
        locked: status == LockStatus::Locked,
        status,
        settle_step: if status == LockStatus::Locked {
            settle_step
        } else {
            None
        },
        steady_state_rms_error: rms,
        tolerance,
        operating_slope_fraction: slope_fraction,
        loop_gain,
        gain_sign,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{phase_at, DEFAULT_CENTER_THZ};
    use std::f64::consts::FRAC_PI_4;

    fn levels() -> QuadLevels {
        QuadLevels::new(0.5, 2.0).unwrap()
    }

    fn model(d: f64, phi0: f64) -> DispersionModel {
        DispersionModel::new(d, DEFAULT_CENTER_THZ, phi0).unwrap()
    }

    #[test]
    fn pd3_examples() {
        let m = model(0.0, 0.0);
        assert_eq!(pd3_model(&m, &QuadLevels::vacuum(), 1545.0, 0.9), 1.0);
        assert!((pd3_model(&m, &levels(), 1545.0, FRAC_PI_4) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn pd3_matches_spectrum_at_lock_wavelength() {
        let lv = QuadLevels::from_db(-3.2, 9.9).unwrap();
        let m = model(0.033, 0.0);
        for k in 0..16 {
            let phi = k as f64 * 0.2;
            let f = wavelength_to_frequency(1545.0);
            let expect = level_at_phase(&lv, phase_at(&m.with_phi0(phi), f));
            assert!((pd3_model(&m, &lv, 1545.0, phi) - expect).abs() < 1e-12);
            assert!(expect >= lv.r_minus() - 1e-12 && expect <= lv.r_plus() + 1e-12);
        }
    }

    #[test]
    fn target_is_a_fixed_point() {
        let plant = LockPlant {
            model: model(0.0, 0.3),
            levels: levels(),
        };
        let start = plant.reading(1545.0, 0.0, 0.0);
        let cfg = LockLoopConfig::new(start, 1545.0);
        let s0 = LockLoopState {
            step: 0,
            integrator: 0.0,
            phi0_actuated: 0.0,
            phi_drift: 0.0,
            pd3_reading: start,
            pd3_true: start,
        };
        let s1 = step(&cfg, &plant, &s0, 1.0, PlantInputs::default()).unwrap();
        assert_eq!(s1.integrator, 0.0);
        assert_eq!(s1.pd3_reading, start);
    }

    #[test]
    fn overflow_is_reported() {
        let plant = LockPlant {
            model: model(0.0, 0.3),
            levels: levels(),
        };
        let mut cfg = LockLoopConfig::new(1.0, 1545.0);
        cfg.ki = f64::MAX;
        cfg.dt = 10.0;
        let s0 = LockLoopState {
            step: 4,
            integrator: 0.0,
            phi0_actuated: 0.0,
            phi_drift: 0.0,
            pd3_reading: 0.5,
            pd3_true: 0.5,
        };
        assert!(matches!(
            step(&cfg, &plant, &s0, 1.0, PlantInputs::default()),
            Err(Error::LockUnstable { step: 5 })
        ));
    }

    #[test]
    fn mid_slope_lock_converges_monotonically() {
        let lv = levels();
        let m = model(0.033, FRAC_PI_4 + 0.4);
        let cfg = LockLoopConfig::mid_slope(&lv, 1545.0);
        let r = run_lock(&cfg, &m, &lv, 1).unwrap();
        assert!(r.locked, "{:?}", r.status);
        assert!(r.steady_state_rms_error < 1e-6);
        let errs: Vec<f64> = r
            .trace
            .iter()
            .map(|s| (cfg.target - s.pd3_true).abs())
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // first-order loop: settles within a few time constants 1/(ki dt slope)
        let tau = 1.0 / r.loop_gain;
        assert!((r.settle_step.unwrap() as f64) < 10.0 * tau);
    }

    #[test]
    fn lock_from_either_slope() {
        let lv = levels();
        let cfg = LockLoopConfig::mid_slope(&lv, 1545.0);
        for phi0 in [0.2, 1.2, 1.9, 2.9, -0.7] {
            let r = run_lock(&cfg, &model(0.0, phi0), &lv, 3).unwrap();
            assert!(r.locked, "phi0={phi0}: {:?}", r.status);
        }
    }

    #[test]
    fn peak_target_does_not_lock() {
        let lv = levels();
        let m = model(0.0, 0.5);
        let mut cfg = LockLoopConfig::new(lv.r_plus(), 1545.0);
        let quiet = run_lock(&cfg, &m, &lv, 5).unwrap();
        assert!(!quiet.locked);
        assert_eq!(quiet.operating_slope_fraction, 0.0);
        cfg.noise_rms = 0.005;
        let noisy = run_lock(&cfg, &m, &lv, 5).unwrap();
        assert!(!noisy.locked);
        // it parks on the extremum, where there is no restoring slope
        assert_eq!(noisy.status, LockStatus::Marginal);
        assert!(noisy.operating_slope_fraction < cfg.min_slope_fraction);
    }

    #[test]
    fn excessive_gain_is_flagged() {
        let lv = levels();
        let mut cfg = LockLoopConfig::mid_slope(&lv, 1545.0);
        // ki dt |slope| = 3 at the target
        cfg.ki = 3.0 / (cfg.dt * lv.span());
        let r = run_lock(&cfg, &model(0.0, 1.0), &lv, 7).unwrap();
        assert!((r.loop_gain - 3.0).abs() < 1e-9);
        assert_eq!(r.status, LockStatus::Unstable);
        // just inside the bound it settles
        cfg.ki = 1.5 / (cfg.dt * lv.span());
        let r = run_lock(&cfg, &model(0.0, 1.0), &lv, 7).unwrap();
        assert!(r.locked);
    }

    #[test]
    fn seeds_are_reproducible() {
        let lv = levels();
        let mut cfg = LockLoopConfig::mid_slope(&lv, 1545.0);
        cfg.noise_rms = 0.01;
        cfg.drift_rate = 0.5;
        cfg.max_steps = 2000;
        let m = model(0.033, 1.0);
        let a = run_lock(&cfg, &m, &lv, 42).unwrap();
        let b = run_lock(&cfg, &m, &lv, 42).unwrap();
        let c = run_lock(&cfg, &m, &lv, 43).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn integral_action_removes_drift_offset() {
        let lv = levels();
        let mut cfg = LockLoopConfig::mid_slope(&lv, 1545.0);
        cfg.drift_rate = 5.0;
        cfg.drift_until = Some(10_000);
        let r = run_lock(&cfg, &model(0.0, 1.0), &lv, 11).unwrap();
        let drift = r.final_state().phi_drift;
        assert!(drift.abs() > 1e-3, "drift should have moved the phase");
        assert!(r.locked, "{:?} rms={}", r.status, r.steady_state_rms_error);
        assert!(r.steady_state_rms_error < 1e-6);
    }

    #[test]
    fn filter_wavelength_selects_the_phase() {
        let lv = levels();
        let m = model(0.033, FRAC_PI_4 + 0.3);
        let run = |nm: f64| {
            let cfg = LockLoopConfig::mid_slope(&lv, nm);
            let r = run_lock(&cfg, &m, &lv, 0).unwrap();
            assert!(r.locked);
            r.steady_phase()
        };
        let (a, b) = (run(1545.0), run(1541.0));
        let fa = wavelength_to_frequency(1545.0);
        let fb = wavelength_to_frequency(1541.0);
        let predicted = -(dispersion_phase(&m, fb) - dispersion_phase(&m, fa));
        assert!(((b - a) - predicted).abs() <= 0.01 * predicted.abs());
    }
}
