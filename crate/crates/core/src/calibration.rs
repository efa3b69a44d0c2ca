//! Calibration of the squeezer model against pump-power sweeps, and
//! loss-budget arithmetic.

use std::f64::consts::LN_10;

use nalgebra::{Matrix2, Vector2};

use crate::error::{ensure, Error, Result};
use crate::sideband::ratio_from_db;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// W
    pub pump: f64,
    pub r_minus_db: f64,
    pub r_plus_db: f64,
}

impl SweepPoint {
    pub fn new(pump: f64, r_minus_db: f64, r_plus_db: f64) -> Result<Self> {
        ensure(
            pump.is_finite() && pump >= 0.0,
            "pump",
            pump,
            "must be >= 0",
        )?;
        ensure(
            r_minus_db.is_finite(),
            "r_minus_db",
            r_minus_db,
            "must be finite",
        )?;
        ensure(
            r_plus_db.is_finite(),
            "r_plus_db",
            r_plus_db,
            "must be finite",
        )?;
        Ok(SweepPoint {
            pump,
            r_minus_db,
            r_plus_db,
        })
    }

    /// Squeezing above 0 dB or anti-squeezing below 0 dB. Noisy sweeps can
    /// do this near zero pump; it is reported, not rejected.
    pub fn is_unphysical(&self) -> bool {
        self.r_minus_db > 0.0 || self.r_plus_db < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// 1/W
    pub a: f64,
    pub l: f64,
    /// RMS of all dB residuals.
    pub residual_rms: f64,
    /// Parameter covariance, order (a, L).
    pub covariance: Matrix2<f64>,
    pub iterations: usize,
    /// Sum of squared residuals after every accepted step (first entry is
    /// the starting point).
    pub cost_history: Vec<f64>,
    /// Indices of input points flagged by [`SweepPoint::is_unphysical`].
    pub warnings: Vec<usize>,
}

impl FitResult {
    pub fn sigma_a(&self) -> f64 {
        self.covariance[(0, 0)].sqrt()
    }

    pub fn sigma_l(&self) -> f64 {
        self.covariance[(1, 1)].sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            step_tolerance: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

const DB: f64 = 10.0 / LN_10;

/// Model levels in dB and their derivatives w.r.t. (a, L) for one pump.
/// Returned as [(minus, d/da, d/dL), (plus, d/da, d/dL)].
fn model_db(a: f64, l: f64, pump: f64) -> [(f64, f64, f64); 2] {
    let s = 2.0 * (a * pump).sqrt();
    let ds_da = if a > 0.0 { s / (2.0 * a) } else { 0.0 };
    [-1.0, 1.0].map(|sign| {
        let e = (sign * s).exp();
        let r = l + (1.0 - l) * e;
        (
            DB * r.ln(),
            DB * (1.0 - l) * e * sign * ds_da / r,
            DB * (1.0 - e) / r,
        )
    })
}

fn residuals(points: &[SweepPoint], a: f64, l: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut r = Vec::with_capacity(2 * points.len());
    let mut j = Vec::with_capacity(2 * points.len());
    for p in points {
        let [minus, plus] = model_db(a, l, p.pump);
        r.push(minus.0 - p.r_minus_db);
        j.push([minus.1, minus.2]);
        r.push(plus.0 - p.r_plus_db);
        j.push([plus.1, plus.2]);
    }
    (r, j)
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn in_domain(a: f64, l: f64) -> bool {
    a > 0.0 && a.is_finite() && (0.0..1.0).contains(&l)
}

/// Starting point: L from the deepest squeezing, a by inverting the
/// anti-squeezing at the largest pump with that L.
pub fn initial_guess(points: &[SweepPoint]) -> (f64, f64) {
    let min_sq = points
        .iter()
        .map(|p| p.r_minus_db)
        .fold(f64::INFINITY, f64::min);
    let l0 = (1.0 - ratio_from_db(min_sq)).clamp(0.05, 0.9);
    let top = points
        .iter()
        .max_by(|x, y| x.pump.total_cmp(&y.pump))
        .expect("non-empty sweep");
    let gain = (ratio_from_db(top.r_plus_db) - l0) / (1.0 - l0);
    let a0 = if gain > 1.0 && top.pump > 0.0 {
        gain.ln().powi(2) / (4.0 * top.pump)
    } else {
        1.0
    };
    (a0, l0)
}

pub fn fit(points: &[SweepPoint]) -> Result<FitResult> {
    fit_with(points, &FitOptions::default())
}

/// Least-squares fit of R(+/-) = L + (1 - L) exp(+/- 2 sqrt(a p)) in dB,
/// both branches weighted equally, by damped Gauss-Newton.
pub fn fit_with(points: &[SweepPoint], opts: &FitOptions) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::DegenerateData("need at least two sweep points"));
    }
    if points.iter().all(|p| p.pump == 0.0) {
        return Err(Error::DegenerateData("all pump powers are zero"));
    }
    let first = points[0].pump;
    if points.iter().all(|p| p.pump == first) {
        return Err(Error::DegenerateData(
            "need at least two distinct pump powers",
        ));
    }
    let warnings = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_unphysical())
        .map(|(i, _)| i)
        .collect();

    let (mut a, mut l) = initial_guess(points);
    let mut lambda = opts.initial_lambda;
    let (mut r, mut jac) = residuals(points, a, l);
    let mut current = cost(&r);
    let mut history = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            let row = Vector2::new(ji[0], ji[1]);
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        let mut damped = jtj;
        for k in 0..2 {
            // Marquardt scaling keeps a (~tens) and L (~0.5) comparable
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(delta) = damped.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let step_norm = delta.norm();
        let (na, nl) = (a + delta[0], l + delta[1]);
        if in_domain(na, nl) {
            let (nr, nj) = residuals(points, na, nl);
            let trial = cost(&nr);
            if trial.is_finite() && trial <= current {
                a = na;
                l = nl;
                r = nr;
                jac = nj;
                current = trial;
                history.push(current);
                lambda /= 10.0;
                if step_norm < opts.step_tolerance {
                    converged = true;
                    break;
                }
                continue;
            }
        }
        lambda *= 10.0;
        if step_norm < opts.step_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitDiverged {
            iterations,
            cost: current,
            lambda,
        });
    }

    let n = r.len();
    let mut jtj = Matrix2::zeros();
    for ji in &jac {
        let row = Vector2::new(ji[0], ji[1]);
        jtj += row * row.transpose();
    }
    let dof = n.saturating_sub(2).max(1) as f64;
    let covariance = jtj
        .try_inverse()
        .map(|inv| inv * (current / dof))
        .unwrap_or_else(|| Matrix2::from_element(f64::INFINITY));
    Ok(FitResult {
        a,
        l,
        residual_rms: (current / n as f64).sqrt(),
        covariance,
        iterations,
        cost_history: history,
        warnings,
    })
}

/// Noiseless sweep from known parameters.
pub fn synthesize_sweep(a: f64, l: f64, pumps: &[f64]) -> Result<Vec<SweepPoint>> {
    ensure(in_domain(a, l), "a", a, "needs a > 0 and 0 <= L < 1")?;
    pumps
        .iter()
        .map(|&p| {
            ensure(p.is_finite() && p >= 0.0, "pump", p, "must be >= 0")?;
            let [m, pl] = model_db(a, l, p);
            SweepPoint::new(p, m.0, pl.0)
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "pump_w,r_minus_db,r_plus_db";

/// Read a sweep CSV with header `pump_w,r_minus_db,r_plus_db`.
pub fn parse_sweep(text: &str) -> Result<Vec<SweepPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["pump_w", "r_minus_db", "r_plus_db"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{SWEEP_HEADER}`"),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Trace {
            row,
            message: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            let raw = rec.get(k).unwrap_or("");
            raw.parse().map_err(|_| Error::Trace {
                row,
                message: format!("cannot parse `{raw}`"),
            })
        };
        points.push(SweepPoint::new(num(0)?, num(1)?, num(2)?)?);
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossElement {
    pub label: String,
    pub transmission: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossChain {
    elements: Vec<LossElement>,
}

impl LossChain {
    pub fn new() -> Self {
        LossChain::default()
    }

    pub fn push(&mut self, label: impl Into<String>, transmission: f64) -> Result<()> {
        ensure(
            transmission.is_finite() && transmission > 0.0 && transmission <= 1.0,
            "transmission",
            transmission,
            "must lie in (0, 1]",
        )?;
        self.elements.push(LossElement {
            label: label.into(),
            transmission,
        });
        Ok(())
    }

    pub fn with(mut self, label: impl Into<String>, transmission: f64) -> Result<Self> {
        self.push(label, transmission)?;
        Ok(self)
    }

    pub fn elements(&self) -> &[LossElement] {
        &self.elements
    }
}

pub fn chain_efficiency(chain: &LossChain) -> f64 {
    chain.elements.iter().map(|e| e.transmission).product()
}

/// Transmission of the stage that is left once a known upstream
/// transmission is divided out of the total.
pub fn infer_stage_efficiency(total: f64, upstream: f64) -> Result<f64> {
    ensure(
        total.is_finite() && total > 0.0 && total <= 1.0,
        "total",
        total,
        "must lie in (0, 1]",
    )?;
    ensure(
        upstream.is_finite() && upstream > 0.0 && upstream <= 1.0,
        "upstream",
        upstream,
        "must lie in (0, 1]",
    )?;
    let ratio = total / upstream;
    if ratio > 1.0 {
        return Err(Error::InconsistentEfficiencies { total, upstream });
    }
    Ok(ratio)
}
