//! Finite-gain phase-sensitive detection with a second OPA.
//!
//! Intensities are always normalized by the amplified-vacuum level, so the
//! photon-energy prefactor never appears.

use crate::error::{ensure, Error, Result};
use crate::sideband::{db_from_ratio_unchecked, ratio_from_db, QuadLevels};

/// Power gain G of the measuring OPA.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OpaGain(f64);

impl OpaGain {
    pub fn new(g: f64) -> Result<Self> {
        ensure(g.is_finite() && g > 0.0, "gain", g, "must be > 0")?;
        Ok(OpaGain(g))
    }

    pub fn from_db(g_db: f64) -> Result<Self> {
        OpaGain::new(ratio_from_db(g_db))
    }

    pub fn linear(&self) -> f64 {
        self.0
    }

    pub fn db(&self) -> f64 {
        db_from_ratio_unchecked(self.0)
    }
}

/// Vacuum-normalized intensity extremes R-' = Imin/I0 and R+' = Imax/I0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredLevels {
    r_minus_meas: f64,
    r_plus_meas: f64,
}

impl MeasuredLevels {
    pub fn new(r_minus_meas: f64, r_plus_meas: f64) -> Result<Self> {
        ensure(
            r_minus_meas.is_finite() && r_minus_meas > 0.0,
            "r_minus_meas",
            r_minus_meas,
            "must be > 0",
        )?;
        ensure(
            r_plus_meas.is_finite() && r_plus_meas >= r_minus_meas,
            "r_plus_meas",
            r_plus_meas,
            "must be >= r_minus_meas",
        )?;
        Ok(MeasuredLevels {
            r_minus_meas,
            r_plus_meas,
        })
    }

    pub fn from_db(r_minus_db: f64, r_plus_db: f64) -> Result<Self> {
        MeasuredLevels::new(ratio_from_db(r_minus_db), ratio_from_db(r_plus_db))
    }

    pub fn r_minus_meas(&self) -> f64 {
        self.r_minus_meas
    }

    pub fn r_plus_meas(&self) -> f64 {
        self.r_plus_meas
    }
}

pub fn measured_from_true(levels: &QuadLevels, gain: OpaGain) -> MeasuredLevels {
    let g2 = gain.0 * gain.0;
    let (rm, rp) = (levels.r_minus(), levels.r_plus());
    MeasuredLevels {
        r_minus_meas: (g2 * rm + rp) / (1.0 + g2),
        r_plus_meas: (g2 * rp + rm) / (1.0 + g2),
    }
}

/// Undo the finite-gain mixing. Needs G > 1.
pub fn true_from_measured(meas: &MeasuredLevels, gain: OpaGain) -> Result<QuadLevels> {
    let g = gain.0;
    if g <= 1.0 {
        return Err(Error::SingularCorrection { gain: g });
    }
    let g2 = g * g;
    let denom = g2 - 1.0;
    let (mm, mp) = (meas.r_minus_meas, meas.r_plus_meas);
    let r_minus = (g2 * mm - mp) / denom;
    let r_plus = (g2 * mp - mm) / denom;
    if r_minus.is_nan() || r_minus <= 0.0 {
        return Err(Error::UnphysicalLevels { r_minus });
    }
    QuadLevels::new(r_minus, r_plus)
}

/// Phase error whose quadrature mixing reproduces the finite-gain bias.
pub fn effective_phase_deviation(gain: OpaGain) -> f64 {
    (1.0 / (1.0 + gain.0 * gain.0)).sqrt().asin()
}

/// How candidate gains are enumerated by [`required_gain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainResolution {
    /// Bisection over continuous G in [1, 1e6].
    Continuous,
    /// Gains on a grid of `step_db` decibels starting at 0 dB, the way
    /// amplifier gains are usually quoted.
    Steps { step_db: f64 },
}

const GAIN_BRACKET: (f64, f64) = (1.0, 1e6);
const BISECTION_ITERS: usize = 200;

/// Bias of the measured squeezing level, dB (always >= 0).
pub fn squeezing_bias_db(levels: &QuadLevels, gain: OpaGain) -> f64 {
    let meas = measured_from_true(levels, gain);
    db_from_ratio_unchecked(meas.r_minus_meas) - levels.r_minus_db()
}

/// Smallest gain for which the measured squeezing level is within
/// `tolerance_db` of the true one.
pub fn required_gain(
    levels: &QuadLevels,
    tolerance_db: f64,
    resolution: GainResolution,
) -> Result<OpaGain> {
    ensure(
        tolerance_db.is_finite() && tolerance_db > 0.0,
        "tolerance_db",
        tolerance_db,
        "must be > 0",
    )?;
    let meets = |g: f64| squeezing_bias_db(levels, OpaGain(g)) <= tolerance_db;
    let (lo, hi) = GAIN_BRACKET;
    let no_solution = Error::NoSolution {
        max_gain: hi,
        tolerance_db,
    };

    match resolution {
        GainResolution::Continuous => {
            if meets(lo) {
                return Ok(OpaGain(lo));
            }
            if !meets(hi) {
                return Err(no_solution);
            }
            let (mut lo, mut hi) = (lo, hi);
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if meets(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(OpaGain(hi))
        }
        GainResolution::Steps { step_db } => {
            ensure(
                step_db.is_finite() && step_db > 0.0,
                "step_db",
                step_db,
                "must be > 0",
            )?;
            let max_db = db_from_ratio_unchecked(hi);
            let mut k = 0u32;
            loop {
                let g_db = k as f64 * step_db;
                if g_db > max_db {
                    return Err(no_solution);
                }
                let g = ratio_from_db(g_db);
                if meets(g) {
                    return Ok(OpaGain(g));
                }
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sideband::{variance_at_phase, PhaseAngle};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn worked_case(anti_db: f64) -> QuadLevels {
        QuadLevels::from_db(-3.0, anti_db).unwrap()
    }

    #[test]
    fn vacuum_passes_unchanged() {
        for g in [0.5, 1.0, 7.0, 1e4] {
            let m = measured_from_true(&QuadLevels::vacuum(), OpaGain::new(g).unwrap());
            assert_relative_eq!(m.r_minus_meas(), 1.0, max_relative = 1e-15);
            assert_relative_eq!(m.r_plus_meas(), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn worked_finite_gain_cases() {
        // mpmath reference values
        let m = measured_from_true(&worked_case(3.0), OpaGain::new(20.0).unwrap());
        assert_relative_eq!(m.r_minus_meas(), 0.504913106648074, max_relative = 1e-12);
        assert_relative_eq!(m.r_plus_meas(), 1.991536441948078, max_relative = 1e-12);
        assert_eq!(
            format!("{:.1}", db_from_ratio_unchecked(m.r_minus_meas())),
            "-3.0"
        );

        let m = measured_from_true(&worked_case(15.0), OpaGain::new(80.0).unwrap());
        assert_relative_eq!(m.r_minus_meas(), 0.506049222280304, max_relative = 1e-12);
        assert_eq!(
            format!("{:.1}", db_from_ratio_unchecked(m.r_minus_meas())),
            "-3.0"
        );
    }

    #[test]
    fn correction_examples() {
        let v = true_from_measured(
            &MeasuredLevels::new(1.0, 1.0).unwrap(),
            OpaGain::new(5.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(v.r_minus(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(v.r_plus(), 1.0, max_relative = 1e-15);

        let v = true_from_measured(
            &MeasuredLevels::new(0.5049, 1.991536441948078).unwrap(),
            OpaGain::new(20.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(v.r_minus(), 0.501174094130456, max_relative = 1e-12);
        assert_relative_eq!(v.r_plus(), 1.995262347817622, max_relative = 1e-12);
    }

    #[test]
    fn correction_error_paths() {
        let m = MeasuredLevels::new(0.6, 2.0).unwrap();
        assert!(matches!(
            true_from_measured(&m, OpaGain::new(1.0).unwrap()),
            Err(Error::SingularCorrection { .. })
        ));
        assert!(matches!(
            true_from_measured(&m, OpaGain::new(0.5).unwrap()),
            Err(Error::SingularCorrection { .. })
        ));
        // R+' too large for the R-' at this gain
        let m = MeasuredLevels::new(0.5, 100.0).unwrap();
        assert!(matches!(
            true_from_measured(&m, OpaGain::new(3.0).unwrap()),
            Err(Error::UnphysicalLevels { .. })
        ));
    }

    #[test]
    fn effective_phase_values() {
        let t = effective_phase_deviation(OpaGain::new(200.0).unwrap());
        assert_relative_eq!(t, 0.004999958333958322, max_relative = 1e-12);
        assert_eq!(format!("{:.1}", t.to_degrees()), "0.3");
        let t = effective_phase_deviation(OpaGain::new(1.0).unwrap());
        assert_relative_eq!(t.to_degrees(), 45.0, max_relative = 1e-12);
        let t = effective_phase_deviation(OpaGain::new(20.0).unwrap());
        assert_relative_eq!(t.to_degrees(), 2.862405226111748, max_relative = 1e-12);
    }

    #[test]
    fn required_gain_whole_db() {
        let steps = GainResolution::Steps { step_db: 1.0 };
        let g = required_gain(&worked_case(3.0), 0.05, steps).unwrap();
        assert_relative_eq!(g.db(), 13.0, max_relative = 1e-12);
        let g = required_gain(&worked_case(15.0), 0.05, steps).unwrap();
        assert_relative_eq!(g.db(), 19.0, max_relative = 1e-12);
    }

    #[test]
    fn required_gain_continuous_is_tight() {
        for anti in [3.0, 15.0] {
            let lv = worked_case(anti);
            let g = required_gain(&lv, 0.05, GainResolution::Continuous).unwrap();
            assert!(squeezing_bias_db(&lv, g) <= 0.05);
            let below = OpaGain::new(g.linear() * (1.0 - 1e-9)).unwrap();
            assert!(squeezing_bias_db(&lv, below) > 0.05);
        }
        // closed form: 1 + G^2 = (R+/R- - 1) / (10^(tol/10) - 1)
        let g = required_gain(&worked_case(3.0), 0.05, GainResolution::Continuous).unwrap();
        assert_relative_eq!(g.linear(), 16.01389779493507, max_relative = 1e-9);
    }

    #[test]
    fn required_gain_vacuum_and_errors() {
        let g = required_gain(&QuadLevels::vacuum(), 0.01, GainResolution::Continuous).unwrap();
        assert_eq!(g.linear(), 1.0);
        assert!(required_gain(&worked_case(3.0), 0.0, GainResolution::Continuous).is_err());
        let extreme = QuadLevels::from_db(-3.0, 200.0).unwrap();
        assert!(matches!(
            required_gain(&extreme, 1e-3, GainResolution::Continuous),
            Err(Error::NoSolution { .. })
        ));
    }

    proptest! {
        #[test]
        fn sandwich_and_monotone(rm in 0.01f64..1.0, extra in 0.0f64..100.0) {
            let lv = QuadLevels::new(rm, 1.0 + extra).unwrap();
            let mut prev = f64::INFINITY;
            for g in [1.0, 10.0, 1e2, 1e4] {
                let m = measured_from_true(&lv, OpaGain::new(g).unwrap());
                prop_assert!(lv.r_minus() <= m.r_minus_meas() * (1.0 + 1e-12));
                prop_assert!(m.r_minus_meas() <= m.r_plus_meas());
                prop_assert!(m.r_plus_meas() <= lv.r_plus() * (1.0 + 1e-12));
                prop_assert!(m.r_minus_meas() <= prev);
                prev = m.r_minus_meas();
            }
            prop_assert!((prev - lv.r_minus()).abs() <= 1e-6 * lv.r_plus());
        }

        #[test]
        fn finite_gain_equals_phase_error(rm in 0.01f64..1.0, extra in 0.0f64..100.0, g in 0.1f64..1e3) {
            let lv = QuadLevels::new(rm, 1.0 + extra).unwrap();
            let gain = OpaGain::new(g).unwrap();
            let m = measured_from_true(&lv, gain);
            let theta = PhaseAngle::new(effective_phase_deviation(gain)).unwrap();
            let (vx, _) = variance_at_phase(&lv, theta);
            prop_assert!((m.r_minus_meas() - vx).abs() <= 1e-12 * vx);
        }

        #[test]
        fn correction_inverts_measurement(rm in 0.01f64..1.0, extra in 0.0f64..100.0, g in 1.01f64..1e3) {
            let lv = QuadLevels::new(rm, 1.0 + extra).unwrap();
            let gain = OpaGain::new(g).unwrap();
            let back = true_from_measured(&measured_from_true(&lv, gain), gain).unwrap();
            prop_assert!((back.r_minus() - lv.r_minus()).abs() <= 1e-9 * lv.r_minus());
            prop_assert!((back.r_plus() - lv.r_plus()).abs() <= 1e-9 * lv.r_plus());
        }
    }
}
