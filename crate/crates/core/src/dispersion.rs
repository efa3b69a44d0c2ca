//! Second-order chromatic dispersion between the two OPAs.
//!
//! Units: dispersion in ps/nm, frequency in THz, wavelength in nm. With c in
//! nm/ps the product `D * c` is dimensionless.

use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};
use crate::sideband::{ratio_from_db, QuadLevels};

/// Speed of light, nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 2.99792458e5;

/// Nominal carrier frequency of the 1545.3 nm seed, THz.
pub const DEFAULT_CENTER_THZ: f64 = 194.0;

pub fn wavelength_to_frequency(nm: f64) -> f64 {
    SPEED_OF_LIGHT_NM_PER_PS / nm
}

pub fn frequency_to_wavelength(thz: f64) -> f64 {
    SPEED_OF_LIGHT_NM_PER_PS / thz
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionModel {
    /// Net dispersion D, ps/nm (signed).
    pub d: f64,
    /// Center frequency f0, THz.
    pub f0: f64,
    /// Phase at the center frequency (lock point offset), radians.
    pub phi0: f64,
}

impl DispersionModel {
    pub fn new(d: f64, f0: f64, phi0: f64) -> Result<Self> {
        let m = DispersionModel { d, f0, phi0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.d.is_finite(), "d", self.d, "must be finite")?;
        ensure(
            self.f0.is_finite() && self.f0 > 0.0,
            "f0",
            self.f0,
            "must be > 0",
        )?;
        ensure(self.phi0.is_finite(), "phi0", self.phi0, "must be finite")
    }

    pub fn with_phi0(&self, phi0: f64) -> Self {
        DispersionModel { phi0, ..*self }
    }

    /// Curvature K in phi = K (f - f0)^2 + phi0, rad/THz^2.
    pub fn curvature(&self) -> f64 {
        PI * self.d * SPEED_OF_LIGHT_NM_PER_PS / (self.f0 * self.f0)
    }
}

/// phi(f) = pi D c ((f0 - f) / f0)^2 + phi0
pub fn phase_at(model: &DispersionModel, f: f64) -> f64 {
    let x = (model.f0 - f) / model.f0;
    PI * model.d * SPEED_OF_LIGHT_NM_PER_PS * x * x + model.phi0
}

/// Dispersion-only part of the phase, i.e. `phase_at` with phi0 = 0.
pub fn dispersion_phase(model: &DispersionModel, f: f64) -> f64 {
    phase_at(model, f) - model.phi0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberSegment {
    /// m
    pub length: f64,
    /// ps/nm/m
    pub d_per_length: f64,
}

impl FiberSegment {
    pub fn new(length: f64, d_per_length: f64) -> Result<Self> {
        ensure(
            length.is_finite() && length >= 0.0,
            "length",
            length,
            "must be >= 0",
        )?;
        ensure(
            d_per_length.is_finite(),
            "d_per_length",
            d_per_length,
            "must be finite",
        )?;
        Ok(FiberSegment {
            length,
            d_per_length,
        })
    }

    /// ps/nm
    pub fn dispersion(&self) -> f64 {
        self.length * self.d_per_length
    }
}

pub fn net_dispersion(segments: &[FiberSegment]) -> f64 {
    segments.iter().map(FiberSegment::dispersion).sum()
}

/// Length of compensating fiber (rate `dcf_d_per_length`, ps/nm/m) that
/// brings the link from its net dispersion down to `target_residual`.
pub fn design_dcf(
    segments: &[FiberSegment],
    dcf_d_per_length: f64,
    target_residual: f64,
) -> Result<f64> {
    ensure(
        dcf_d_per_length.is_finite(),
        "dcf_d_per_length",
        dcf_d_per_length,
        "must be finite",
    )?;
    ensure(
        target_residual.is_finite(),
        "target_residual",
        target_residual,
        "must be finite",
    )?;
    let net = net_dispersion(segments);
    let needed = net - target_residual;
    if needed == 0.0 {
        return Ok(0.0);
    }
    let same_sign = net != 0.0 && net.signum() == dcf_d_per_length.signum();
    if dcf_d_per_length == 0.0 || same_sign {
        return Err(Error::DcfDesign {
            dcf_rate: dcf_d_per_length,
            net,
            target: target_residual,
        });
    }
    Ok((needed / -dcf_d_per_length).max(0.0))
}

/// Phase offset from the squeezing axis at which the measured level has
/// degraded from R- by `degradation_db`.
pub fn degradation_phase(levels: &QuadLevels, degradation_db: f64) -> Result<f64> {
    ensure(
        degradation_db.is_finite() && degradation_db > 0.0,
        "degradation_db",
        degradation_db,
        "must be > 0",
    )?;
    let span = levels.span();
    if span <= 0.0 {
        return Ok(PI / 2.0);
    }
    let s2 = levels.r_minus() * (ratio_from_db(degradation_db) - 1.0) / span;
    Ok(s2.min(1.0).sqrt().asin())
}

/// Frequency interval, THz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    pub lo: f64,
    pub hi: f64,
}

impl FrequencyBand {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// (short, long) wavelength edges, nm.
    pub fn wavelengths(&self) -> (f64, f64) {
        (
            frequency_to_wavelength(self.hi),
            frequency_to_wavelength(self.lo),
        )
    }

    pub fn contains(&self, f: f64) -> bool {
        (self.lo..=self.hi).contains(&f)
    }
}

/// Largest contiguous interval around `lock_f` over which the dispersion
/// phase stays within `max_dev` of its value at `lock_f`, clipped to `limits`.
pub fn phase_maintained_band(
    model: &DispersionModel,
    lock_f: f64,
    max_dev: f64,
    limits: FrequencyBand,
) -> Result<FrequencyBand> {
    model.validate()?;
    ensure(
        max_dev.is_finite() && max_dev > 0.0,
        "max_dev",
        max_dev,
        "must be > 0",
    )?;
    ensure(
        limits.lo < limits.hi,
        "limits.lo",
        limits.lo,
        "must be below limits.hi",
    )?;
    ensure(
        limits.contains(lock_f),
        "lock_f",
        lock_f,
        "must lie inside the band limits",
    )?;
    let k = model.curvature().abs();
    if k == 0.0 {
        return Ok(limits);
    }
    let reach = max_dev / k;
    let ul = lock_f - model.f0;
    // offset from f0 where the band stops when walking upwards from u
    let upper = |u: f64| {
        if u < 0.0 && u * u > reach {
            -(u * u - reach).sqrt()
        } else {
            (u * u + reach).sqrt()
        }
    };
    let hi = model.f0 + upper(ul);
    let lo = model.f0 - upper(-ul);
    Ok(FrequencyBand {
        lo: lo.max(limits.lo),
        hi: hi.min(limits.hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ref_model(d: f64) -> DispersionModel {
        DispersionModel::new(d, DEFAULT_CENTER_THZ, 0.0).unwrap()
    }

    #[test]
    fn phase_examples() {
        let flat = DispersionModel::new(0.0, 194.0, 0.7).unwrap();
        assert_eq!(phase_at(&flat, 190.0), 0.7);
        let m = ref_model(0.033);
        assert_eq!(phase_at(&m, 194.0), 0.0);
        // D c = 9893.15..., phi = pi at |f - f0| = f0 / sqrt(D c)
        let df = 1.950448144842744;
        assert_relative_eq!(phase_at(&m, 194.0 + df), PI, max_relative = 1e-12);
        assert_relative_eq!(phase_at(&m, 194.0 - df), PI, max_relative = 1e-12);
    }

    #[test]
    fn invalid_model() {
        assert!(DispersionModel::new(0.01, 0.0, 0.0).is_err());
        assert!(DispersionModel::new(f64::NAN, 194.0, 0.0).is_err());
    }

    #[test]
    fn dcf_lengths() {
        let link = [FiberSegment::new(2.0, 0.0165).unwrap()];
        let l = design_dcf(&link, -0.0407, 0.0045).unwrap();
        assert_relative_eq!(l, 0.7002457002457002, max_relative = 1e-12);
        let l = design_dcf(&link, -0.0407, 0.0).unwrap();
        assert_relative_eq!(l, 0.8108108108108109, max_relative = 1e-12);
        assert_eq!(design_dcf(&[], -0.0407, 0.0).unwrap(), 0.0);
        assert_eq!(design_dcf(&[], 0.1, 0.0).unwrap(), 0.0);
        // target above what the link already has
        assert_eq!(design_dcf(&link, -0.0407, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn dcf_same_sign_rejected() {
        let link = [FiberSegment::new(2.0, 0.0165).unwrap()];
        assert!(matches!(
            design_dcf(&link, 0.02, 0.0),
            Err(Error::DcfDesign { .. })
        ));
        assert!(matches!(
            design_dcf(&link, 0.0, 0.0),
            Err(Error::DcfDesign { .. })
        ));
        assert!(FiberSegment::new(-1.0, 0.01).is_err());
    }

    #[test]
    fn flat_band_is_whole_window() {
        let limits = FrequencyBand {
            lo: 188.0,
            hi: 200.0,
        };
        let b = phase_maintained_band(&ref_model(0.0), 194.2, 0.1, limits).unwrap();
        assert_eq!(b, limits);
    }

    #[test]
    fn band_widths_scale_with_dispersion() {
        let limits = FrequencyBand {
            lo: 150.0,
            hi: 250.0,
        };
        let wide = phase_maintained_band(&ref_model(0.0045), 194.0, 0.12, limits).unwrap();
        let narrow = phase_maintained_band(&ref_model(0.033), 194.0, 0.12, limits).unwrap();
        // mpmath: 2 sqrt(0.12 / K)
        assert_relative_eq!(wide.width(), 2.064575664436061, max_relative = 1e-12);
        assert_relative_eq!(narrow.width(), 0.7623950903252438, max_relative = 1e-12);
        assert!(wide.hi - 194.0 >= 1.0);
        assert_relative_eq!(
            wide.width() / narrow.width(),
            (0.033f64 / 0.0045).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn band_off_center_lock() {
        let m = ref_model(0.033);
        let limits = FrequencyBand {
            lo: 150.0,
            hi: 250.0,
        };
        let k = m.curvature();
        // lock far below f0: the band closes before reaching f0
        let lock = 192.0;
        let b = phase_maintained_band(&m, lock, 0.2, limits).unwrap();
        for f in [b.lo, b.hi] {
            let dev = (phase_at(&m, f) - phase_at(&m, lock)).abs();
            assert_relative_eq!(dev, 0.2, max_relative = 1e-9);
        }
        assert!(b.hi < 194.0);
        // lock just below f0: the band spans the vertex
        let lock = 193.9;
        let b = phase_maintained_band(&m, lock, 0.2, limits).unwrap();
        assert!(b.hi > 194.0);
        assert_relative_eq!(
            k * (b.hi - 194.0).powi(2) - k * 0.01,
            0.2,
            max_relative = 1e-9
        );
    }

    #[test]
    fn band_clipped_to_limits() {
        let limits = FrequencyBand {
            lo: 193.5,
            hi: 194.5,
        };
        let b = phase_maintained_band(&ref_model(0.0045), 194.0, 1.0, limits).unwrap();
        assert_eq!(b, limits);
        assert!(phase_maintained_band(&ref_model(0.0045), 199.0, 1.0, limits).is_err());
    }

    #[test]
    fn one_db_threshold() {
        let lv = QuadLevels::from_db(-1.2, 7.1).unwrap();
        let d = degradation_phase(&lv, 1.0).unwrap();
        let r = lv.r_minus() * d.cos().powi(2) + lv.r_plus() * d.sin().powi(2);
        assert_relative_eq!(10.0 * (r / lv.r_minus()).log10(), 1.0, max_relative = 1e-12);
        assert_eq!(
            degradation_phase(&QuadLevels::vacuum(), 1.0).unwrap(),
            PI / 2.0
        );
    }

    proptest! {
        #[test]
        fn phase_is_even_about_center(d in -0.2f64..0.2, phi0 in -3.0f64..3.0, u in 0.0f64..10.0) {
            let m = DispersionModel::new(d, 194.0, phi0).unwrap();
            let a = phase_at(&m, 194.0 + u);
            let b = phase_at(&m, 194.0 - u);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn segments_add_linearly(
            l1 in 0.0f64..10.0, r1 in -0.1f64..0.1, l2 in 0.0f64..10.0, r2 in -0.1f64..0.1, s in 0.0f64..5.0,
        ) {
            let a = FiberSegment::new(l1, r1).unwrap();
            let b = FiberSegment::new(l2, r2).unwrap();
            let sum = net_dispersion(&[a, b]);
            prop_assert!((sum - (a.dispersion() + b.dispersion())).abs() <= 1e-15);
            let scaled = FiberSegment::new(l1 * s, r1).unwrap();
            prop_assert!((scaled.dispersion() - s * a.dispersion()).abs() <= 1e-12);
        }

        #[test]
        fn band_edges_hit_the_deviation(d in 0.001f64..0.1, lock in 190.0f64..198.0, dev in 0.01f64..1.0) {
            let m = DispersionModel::new(d, 194.0, 0.0).unwrap();
            let limits = FrequencyBand { lo: 100.0, hi: 300.0 };
            let b = phase_maintained_band(&m, lock, dev, limits).unwrap();
            prop_assert!(b.contains(lock));
            let p = phase_at(&m, lock);
            for f in [b.lo, b.hi] {
                prop_assert!(((phase_at(&m, f) - p).abs() - dev).abs() <= 1e-9);
            }
            // every interior point stays within the deviation
            for i in 1..50 {
                let f = b.lo + b.width() * i as f64 / 50.0;
                prop_assert!((phase_at(&m, f) - p).abs() <= dev + 1e-9);
            }
        }
    }
}
