//! Rippled spectra of the amplified squeezed vacuum and dispersion
//! estimation from ripple positions.

use std::f64::consts::FRAC_PI_2;

use crate::dispersion::{
    phase_at, wavelength_to_frequency, DispersionModel, SPEED_OF_LIGHT_NM_PER_PS,
};
use crate::error::{ensure, Error, Result};
use crate::sideband::QuadLevels;
use crate::trace::{SpectrumTrace, TraceMeta, TracePoint, Unit};

/// Vacuum-normalized level at phase `phi`: R+ cos^2 + R- sin^2.
pub fn level_at_phase(levels: &QuadLevels, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    levels.r_plus() * c * c + levels.r_minus() * s * s
}

/// Synthesize the vacuum-normalized spectrum on a wavelength grid (nm).
pub fn spectrum(
    model: &DispersionModel,
    levels: &QuadLevels,
    grid: &[f64],
) -> Result<SpectrumTrace> {
    model.validate()?;
    if grid.is_empty() {
        return Err(Error::EmptyInput("wavelength grid is empty"));
    }
    let points = grid
        .iter()
        .map(|&nm| {
            ensure(
                nm.is_finite() && nm > 0.0,
                "wavelength_nm",
                nm,
                "must be > 0",
            )?;
            let f = wavelength_to_frequency(nm);
            Ok(TracePoint {
                wavelength_nm: nm,
                value: level_at_phase(levels, phase_at(model, f)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(
        SpectrumTrace::new(points, Unit::Ratio)?.with_meta(TraceMeta {
            label: Some(format!("synthetic D={} ps/nm", model.d)),
            ..TraceMeta::default()
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub wavelength_nm: f64,
    pub frequency_thz: f64,
    /// Linear ratio at the sample nearest the extremum.
    pub value: f64,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremumOptions {
    /// Moving-average window, nm.
    pub smoothing_nm: f64,
    /// Minimum swing, as a fraction of the trace's full range, before a
    /// turning point counts as a ripple extremum.
    pub min_prominence: f64,
}

impl Default for ExtremumOptions {
    fn default() -> Self {
        ExtremumOptions {
            smoothing_nm: 0.1,
            min_prominence: 0.1,
        }
    }
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Ripple extrema of a trace, ordered by wavelength.
///
/// Uses hysteresis: a turning point is only accepted once the signal has
/// moved away from it by the prominence threshold, so the first and last
/// partial ripples at the window edges are never reported.
pub fn find_extrema(trace: &SpectrumTrace, opts: &ExtremumOptions) -> Vec<Extremum> {
    let n = trace.len();
    if n < 3 {
        return Vec::new();
    }
    let step = trace.mean_step_nm();
    let mut window = if step > 0.0 {
        (opts.smoothing_nm / step).round().max(1.0) as usize
    } else {
        1
    };
    if window % 2 == 0 {
        window += 1;
    }
    let y = moving_average(&trace.ratios(), window);
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let threshold = opts.min_prominence * (hi - lo);
    if threshold.is_nan() || threshold <= 0.0 {
        return Vec::new();
    }

    let mut found = Vec::new();
    let (mut hi_i, mut lo_i) = (0usize, 0usize);
    let mut dir = 0i8;
    let mut cand = 0usize;
    for i in 1..n {
        match dir {
            0 => {
                if y[i] > y[hi_i] {
                    hi_i = i;
                }
                if y[i] < y[lo_i] {
                    lo_i = i;
                }
                if y[hi_i] - y[lo_i] >= threshold {
                    if hi_i > lo_i {
                        dir = 1;
                        cand = hi_i;
                    } else {
                        dir = -1;
                        cand = lo_i;
                    }
                }
            }
            1 => {
                if y[i] > y[cand] {
                    cand = i;
                } else if y[cand] - y[i] >= threshold {
                    found.push((cand, ExtremumKind::Max));
                    dir = -1;
                    cand = i;
                }
            }
            _ => {
                if y[i] < y[cand] {
                    cand = i;
                } else if y[i] - y[cand] >= threshold {
                    found.push((cand, ExtremumKind::Min));
                    dir = 1;
                    cand = i;
                }
            }
        }
    }

    let pts = trace.points();
    found
        .into_iter()
        .map(|(i, kind)| {
            let wl = refine_vertex(pts, &y, i);
            Extremum {
                wavelength_nm: wl,
                frequency_thz: wavelength_to_frequency(wl),
                value: y[i],
                kind,
            }
        })
        .collect()
}

/// Sub-sample location of a turning point from a parabola through the
/// sample and its two neighbours.
fn refine_vertex(pts: &[TracePoint], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= pts.len() {
        return pts[i].wavelength_nm;
    }
    let (x0, x1, x2) = (
        pts[i - 1].wavelength_nm,
        pts[i].wavelength_nm,
        pts[i + 1].wavelength_nm,
    );
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv == 0.0 || !curv.is_finite() {
        return x1;
    }
    // vertex of the interpolating parabola
    let xv = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    xv.clamp(x0, x2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionEstimate {
    /// |D|, ps/nm. Ripple positions do not reveal the sign.
    pub d: f64,
    /// Extrema that entered the fit.
    pub extrema: Vec<Extremum>,
    /// RMS misfit of the assigned ripple phases, radians.
    pub rms_phase_residual: f64,
}

/// Estimate |D| from ripple positions.
///
/// Adjacent extrema on one side of `f0` are a quarter period (pi/2 in phase)
/// apart, or pi apart when two of the same kind follow each other. Their
/// cumulative phase is fitted against ((f - f0) / f0)^2 with a common slope
/// pi D c and a separate offset per side. The stationary ripple at `f0`
/// itself carries an arbitrary phase and is left out.
pub fn estimate_dispersion(
    trace: &SpectrumTrace,
    f0: f64,
    opts: &ExtremumOptions,
) -> Result<DispersionEstimate> {
    ensure(f0.is_finite() && f0 > 0.0, "f0", f0, "must be > 0")?;
    let extrema = find_extrema(trace, opts);

    // keep clear of the vertex by a few samples
    let step_thz = {
        let pts = trace.points();
        if pts.len() > 1 {
            let mid = pts[pts.len() / 2].wavelength_nm;
            wavelength_to_frequency(mid) * trace.mean_step_nm() / mid
        } else {
            0.0
        }
    };
    let guard = 3.0 * step_thz;

    let mut sides: [Vec<Extremum>; 2] = [Vec::new(), Vec::new()];
    for e in extrema {
        let u = e.frequency_thz - f0;
        if u.abs() <= guard {
            continue;
        }
        sides[usize::from(u > 0.0)].push(e);
    }

    // (x, phase, side)
    let mut samples = Vec::new();
    for (side, list) in sides.iter_mut().enumerate() {
        list.sort_by(|a, b| {
            (a.frequency_thz - f0)
                .abs()
                .total_cmp(&(b.frequency_thz - f0).abs())
        });
        let mut phase = 0.0;
        for (k, e) in list.iter().enumerate() {
            if k > 0 {
                phase += if e.kind == list[k - 1].kind {
                    2.0 * FRAC_PI_2
                } else {
                    FRAC_PI_2
                };
            }
            let x = ((e.frequency_thz - f0) / f0).powi(2);
            samples.push((x, phase, side));
        }
    }
    let usable = sides
        .iter()
        .map(|s| s.len().saturating_sub(1))
        .sum::<usize>();
    if usable < 1 {
        return Err(Error::InsufficientRipples {
            found: sides.iter().map(Vec::len).sum(),
        });
    }

    // least squares for y = s x + b_side: centre per side, then pool
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut means = [(0.0, 0.0); 2];
    for (side, mean) in means.iter_mut().enumerate() {
        let pts: Vec<_> = samples.iter().filter(|p| p.2 == side).collect();
        if pts.is_empty() {
            continue;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        *mean = (mx, my);
        for p in pts {
            sxy += (p.0 - mx) * (p.1 - my);
            sxx += (p.0 - mx) * (p.0 - mx);
        }
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::InsufficientRipples {
            found: samples.len(),
        });
    }
    let slope = sxy / sxx;
    let ss: f64 = samples
        .iter()
        .map(|&(x, y, side)| {
            let (mx, my) = means[side];
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum();
    let d = slope / (std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_PS);
    let [a, b] = sides;
    let mut used: Vec<Extremum> = a.into_iter().chain(b).collect();
    used.sort_by(|p, q| p.wavelength_nm.total_cmp(&q.wavelength_nm));
    Ok(DispersionEstimate {
        d: d.abs(),
        extrema: used,
        rms_phase_residual: (ss / samples.len() as f64).sqrt(),
    })
}
