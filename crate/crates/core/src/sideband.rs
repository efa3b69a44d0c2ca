//! Quadrature-variance model of the squeezer.
//!
//! All levels are linear variance ratios relative to the vacuum (vacuum = 1).
//! Decibels only appear at the I/O boundary through [`db_from_ratio`] and
//! [`ratio_from_db`].

use std::f64::consts::PI;

use crate::error::{ensure, Result};

/// Operating point of the squeezing OPA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezerParams {
    /// Nonlinear efficiency, 1/W.
    pub a: f64,
    /// Total optical loss, fraction in [0, 1).
    pub loss: f64,
    /// Pump power, W.
    pub pump: f64,
}

impl SqueezerParams {
    pub fn new(a: f64, loss: f64, pump: f64) -> Result<Self> {
        let params = SqueezerParams { a, loss, pump };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            self.a.is_finite() && self.a > 0.0,
            "a",
            self.a,
            "must be > 0",
        )?;
        ensure(
            self.loss.is_finite() && (0.0..1.0).contains(&self.loss),
            "loss",
            self.loss,
            "must lie in [0, 1)",
        )?;
        ensure(
            self.pump.is_finite() && self.pump >= 0.0,
            "pump",
            self.pump,
            "must be >= 0",
        )
    }
}

/// Squeezing / anti-squeezing pair (R-, R+).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadLevels {
    r_minus: f64,
    r_plus: f64,
}

impl QuadLevels {
    pub fn new(r_minus: f64, r_plus: f64) -> Result<Self> {
        ensure(
            r_minus.is_finite() && r_minus > 0.0,
            "r_minus",
            r_minus,
            "must be > 0",
        )?;
        ensure(
            r_plus.is_finite() && r_plus >= r_minus,
            "r_plus",
            r_plus,
            "must be >= r_minus",
        )?;
        Ok(QuadLevels { r_minus, r_plus })
    }

    pub fn from_db(r_minus_db: f64, r_plus_db: f64) -> Result<Self> {
        QuadLevels::new(ratio_from_db(r_minus_db), ratio_from_db(r_plus_db))
    }

    pub const fn vacuum() -> Self {
        QuadLevels {
            r_minus: 1.0,
            r_plus: 1.0,
        }
    }

    pub fn r_minus(&self) -> f64 {
        self.r_minus
    }

    pub fn r_plus(&self) -> f64 {
        self.r_plus
    }

    pub fn r_minus_db(&self) -> f64 {
        db_from_ratio_unchecked(self.r_minus)
    }

    pub fn r_plus_db(&self) -> f64 {
        db_from_ratio_unchecked(self.r_plus)
    }

    /// Peak-to-peak swing R+ - R-.
    pub fn span(&self) -> f64 {
        self.r_plus - self.r_minus
    }

    /// Extra loss in front of the measurement (transmission `t`) mixes in vacuum.
    pub fn attenuate(&self, transmission: f64) -> Result<Self> {
        ensure(
            transmission > 0.0 && transmission <= 1.0,
            "transmission",
            transmission,
            "must lie in (0, 1]",
        )?;
        let mix = |r: f64| transmission * r + (1.0 - transmission);
        QuadLevels::new(mix(self.r_minus), mix(self.r_plus))
    }
}

/// Phase of the first OPA relative to the measurement axis, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAngle(f64);

impl PhaseAngle {
    pub fn new(theta: f64) -> Result<Self> {
        ensure(theta.is_finite(), "theta", theta, "must be finite")?;
        Ok(PhaseAngle(theta))
    }

    pub fn radians(&self) -> f64 {
        self.0
    }

    /// The variances are pi-periodic in theta; this folds into [0, pi).
    pub fn canonical(&self) -> Self {
        PhaseAngle(self.0.rem_euclid(PI))
    }
}

/// R(+/-) = L + (1 - L) exp(+/- 2 sqrt(a p)).
pub fn true_levels(params: &SqueezerParams) -> Result<QuadLevels> {
    params.validate()?;
    let s = 2.0 * (params.a * params.pump).sqrt();
    let l = params.loss;
    Ok(QuadLevels {
        r_minus: l + (1.0 - l) * (-s).exp(),
        r_plus: l + (1.0 - l) * s.exp(),
    })
}

/// Quadrature variances `(vx, vp)` seen along `theta`.
pub fn variance_at_phase(levels: &QuadLevels, theta: PhaseAngle) -> (f64, f64) {
    let (s, c) = theta.radians().sin_cos();
    let (s2, c2) = (s * s, c * c);
    let vx = levels.r_minus * c2 + levels.r_plus * s2;
    let vp = levels.r_minus * s2 + levels.r_plus * c2;
    (vx, vp)
}

pub fn db_from_ratio(r: f64) -> Result<f64> {
    ensure(r.is_finite() && r > 0.0, "ratio", r, "must be > 0")?;
    Ok(db_from_ratio_unchecked(r))
}

pub(crate) fn db_from_ratio_unchecked(r: f64) -> f64 {
    10.0 * r.log10()
}

pub fn ratio_from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl From<QuadLevels> for (f64, f64) {
    fn from(l: QuadLevels) -> Self {
        (l.r_minus, l.r_plus)
    }
}

impl std::fmt::Display for QuadLevels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "R- = {:.1} dB, R+ = {:.1} dB",
            self.r_minus_db(),
            self.r_plus_db()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_pump_is_vacuum() {
        let l = true_levels(&SqueezerParams::new(19.1, 0.425, 0.0).unwrap()).unwrap();
        assert_eq!(l.r_minus(), 1.0);
        assert_eq!(l.r_plus(), 1.0);
    }

    #[test]
    fn all_optical_operating_point() {
        // mpmath, 30 digits
        let l = true_levels(&SqueezerParams::new(20.1, 0.487, 0.1).unwrap()).unwrap();
        assert_relative_eq!(l.r_minus(), 0.517107866087348, max_relative = 1e-12);
        assert_relative_eq!(l.r_plus(), 9.227871878349065, max_relative = 1e-12);
        // within half a dB of the levels read off the 100 mW spectrum
        assert!((l.r_minus_db() - -3.2).abs() < 0.5);
        assert!((l.r_plus_db() - 9.9).abs() < 0.5);
    }

    #[test]
    fn homodyne_operating_point_200mw() {
        let l = true_levels(&SqueezerParams::new(19.1, 0.425, 0.2).unwrap()).unwrap();
        assert_relative_eq!(l.r_minus(), 0.436535231763931, max_relative = 1e-12);
        assert_relative_eq!(l.r_plus(), 29.08718960886441, max_relative = 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SqueezerParams::new(0.0, 0.4, 0.1).is_err());
        assert!(SqueezerParams::new(10.0, 1.0, 0.1).is_err());
        assert!(SqueezerParams::new(10.0, -0.1, 0.1).is_err());
        assert!(SqueezerParams::new(10.0, 0.4, -1.0).is_err());
        let bad = SqueezerParams {
            a: f64::NAN,
            loss: 0.1,
            pump: 0.1,
        };
        assert!(true_levels(&bad).is_err());
    }

    #[test]
    fn quad_levels_ordering() {
        assert!(QuadLevels::new(0.0, 1.0).is_err());
        assert!(QuadLevels::new(2.0, 1.0).is_err());
        assert!(QuadLevels::new(0.5, 0.5).is_ok());
    }

    #[test]
    fn pure_and_mixed_quadratures() {
        let l = QuadLevels::new(0.5, 2.0).unwrap();
        let (vx, vp) = variance_at_phase(&l, PhaseAngle::new(0.0).unwrap());
        assert_relative_eq!(vx, 0.5, max_relative = 1e-12);
        assert_relative_eq!(vp, 2.0, max_relative = 1e-12);
        let (vx, vp) = variance_at_phase(&l, PhaseAngle::new(PI / 4.0).unwrap());
        assert_relative_eq!(vx, 1.25, max_relative = 1e-12);
        assert_relative_eq!(vp, 1.25, max_relative = 1e-12);
    }

    #[test]
    fn small_phase_error() {
        let l = QuadLevels::new(0.5012, 1.9953).unwrap();
        let (vx, vp) = variance_at_phase(&l, PhaseAngle::new(0.05).unwrap());
        assert_relative_eq!(vx, 0.504932138329051, max_relative = 1e-12);
        assert_relative_eq!(vp, 1.991567861670949, max_relative = 1e-12);
    }

    #[test]
    fn decibel_conversions() {
        assert_eq!(db_from_ratio(1.0).unwrap(), 0.0);
        assert!((db_from_ratio(0.501187).unwrap() - -3.0).abs() < 1e-5);
        assert_relative_eq!(ratio_from_db(9.9), 9.772372209558107, max_relative = 1e-12);
        assert!(db_from_ratio(0.0).is_err());
        assert!(db_from_ratio(-1.0).is_err());
    }

    #[test]
    fn canonical_phase() {
        let t = PhaseAngle::new(-0.25).unwrap().canonical();
        assert_relative_eq!(t.radians(), PI - 0.25, max_relative = 1e-12);
        assert!(PhaseAngle::new(f64::INFINITY).is_err());
    }

    #[test]
    fn attenuation_moves_toward_vacuum() {
        let l = QuadLevels::new(0.5, 4.0).unwrap().attenuate(0.5).unwrap();
        assert_relative_eq!(l.r_minus(), 0.75);
        assert_relative_eq!(l.r_plus(), 2.5);
    }

    proptest! {
        #[test]
        fn levels_bracket_vacuum_and_are_monotone(
            a in 0.1f64..100.0, loss in 0.0f64..0.99, p in 0.0f64..0.5, dp in 1e-4f64..0.1,
        ) {
            let lo = true_levels(&SqueezerParams::new(a, loss, p).unwrap()).unwrap();
            let hi = true_levels(&SqueezerParams::new(a, loss, p + dp).unwrap()).unwrap();
            prop_assert!(lo.r_minus() <= 1.0 && lo.r_plus() >= 1.0);
            prop_assert!(hi.r_minus() < lo.r_minus());
            prop_assert!(hi.r_plus() > lo.r_plus());
        }

        #[test]
        fn more_loss_pulls_toward_vacuum(
            a in 0.1f64..100.0, loss in 0.0f64..0.9, dl in 1e-3f64..0.09, p in 1e-3f64..0.5,
        ) {
            let lo = true_levels(&SqueezerParams::new(a, loss, p).unwrap()).unwrap();
            let hi = true_levels(&SqueezerParams::new(a, loss + dl, p).unwrap()).unwrap();
            prop_assert!(hi.r_minus() > lo.r_minus());
            prop_assert!(hi.r_plus() < lo.r_plus());
        }

        #[test]
        fn mixing_conserves_sum(rm in 0.01f64..1.0, extra in 0.0f64..50.0, theta in -10.0f64..10.0) {
            let l = QuadLevels::new(rm, rm + extra).unwrap();
            let (vx, vp) = variance_at_phase(&l, PhaseAngle::new(theta).unwrap());
            let sum = l.r_minus() + l.r_plus();
            prop_assert!(((vx + vp) - sum).abs() <= 1e-9 * sum);
        }

        #[test]
        fn mixing_is_pi_periodic(rm in 0.01f64..1.0, extra in 0.0f64..50.0, theta in -10.0f64..10.0) {
            let l = QuadLevels::new(rm, rm + extra).unwrap();
            let (a1, b1) = variance_at_phase(&l, PhaseAngle::new(theta).unwrap());
            let (a2, b2) = variance_at_phase(&l, PhaseAngle::new(theta + PI).unwrap());
            prop_assert!((a1 - a2).abs() <= 1e-12 * (1.0 + a1));
            prop_assert!((b1 - b2).abs() <= 1e-12 * (1.0 + b1));
        }

        #[test]
        fn db_round_trip(x in -60.0f64..60.0) {
            let back = db_from_ratio(ratio_from_db(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
            let r = ratio_from_db(x);
            prop_assert!((ratio_from_db(db_from_ratio(r).unwrap()) - r).abs() <= 1e-12 * r);
        }
    }
}
