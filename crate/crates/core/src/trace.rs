//! Sampled spectra and their CSV representation.
//!
//! File layout (LF line endings, `.` decimal point):
//!
//! ```text
//! # label=amplified squeezed vacuum
//! # rbw_nm=0.2
//! # smoothing_nm=0.1
//! wavelength_nm,value,unit
//! 1500,0.93,ratio
//! ```
//!
//! The `#` metadata lines are optional. Numbers are written in the shortest
//! form that parses back to the same `f64`, so a write/read cycle is exact.

use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::sideband::{db_from_ratio_unchecked, ratio_from_db};

pub const TRACE_HEADER: &str = "wavelength_nm,value,unit";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ratio,
    Db,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Ratio => "ratio",
            Unit::Db => "db",
        }
    }

    fn parse(s: &str) -> Option<Unit> {
        match s {
            "ratio" => Some(Unit::Ratio),
            "db" => Some(Unit::Db),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub wavelength_nm: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMeta {
    pub label: Option<String>,
    pub resolution_bw_nm: Option<f64>,
    pub smoothing_nm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    points: Vec<TracePoint>,
    unit: Unit,
    pub meta: TraceMeta,
}

impl SpectrumTrace {
    pub fn new(points: Vec<TracePoint>, unit: Unit) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.wavelength_nm.is_finite() || p.wavelength_nm <= 0.0 || !p.value.is_finite() {
                return Err(Error::Trace {
                    row: i + 1,
                    message: "non-finite or non-positive sample".into(),
                });
            }
            if unit == Unit::Ratio && p.value <= 0.0 {
                return Err(Error::Trace {
                    row: i + 1,
                    message: "ratio values must be > 0".into(),
                });
            }
            if i > 0 && p.wavelength_nm <= points[i - 1].wavelength_nm {
                return Err(Error::Trace {
                    row: i + 1,
                    message: "wavelengths must be strictly increasing".into(),
                });
            }
        }
        Ok(SpectrumTrace {
            points,
            unit,
            meta: TraceMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.wavelength_nm)
    }

    /// Values as linear ratios regardless of the stored unit.
    pub fn ratios(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match self.unit {
                Unit::Ratio => p.value,
                Unit::Db => ratio_from_db(p.value),
            })
            .collect()
    }

    pub fn to_unit(&self, unit: Unit) -> SpectrumTrace {
        if unit == self.unit {
            return self.clone();
        }
        let points = self
            .points
            .iter()
            .map(|p| TracePoint {
                wavelength_nm: p.wavelength_nm,
                value: match unit {
                    Unit::Ratio => ratio_from_db(p.value),
                    Unit::Db => db_from_ratio_unchecked(p.value),
                },
            })
            .collect();
        SpectrumTrace {
            points,
            unit,
            meta: self.meta.clone(),
        }
    }

    /// Mean sample spacing, nm. Zero for single-point traces.
    pub fn mean_step_nm(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) if self.points.len() > 1 => {
                (b.wavelength_nm - a.wavelength_nm) / (self.points.len() - 1) as f64
            }
            _ => 0.0,
        }
    }

    /// (min, max) of the stored values.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .map(|p| p.value)
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Uniform grid from `start` to `stop` inclusive.
pub fn wavelength_grid(start_nm: f64, stop_nm: f64, step_nm: f64) -> Result<Vec<f64>> {
    if !(step_nm.is_finite() && step_nm > 0.0) {
        return Err(Error::InvalidParameter {
            name: "step_nm",
            value: step_nm,
            reason: "must be > 0",
        });
    }
    if !(start_nm.is_finite() && start_nm > 0.0 && stop_nm.is_finite() && stop_nm >= start_nm) {
        return Err(Error::InvalidParameter {
            name: "stop_nm",
            value: stop_nm,
            reason: "grid needs 0 < start <= stop",
        });
    }
    let n = ((stop_nm - start_nm) / step_nm + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start_nm + i as f64 * step_nm).collect())
}

pub fn write_trace(trace: &SpectrumTrace) -> String {
    let mut out = String::new();
    let meta = &trace.meta;
    if let Some(label) = &meta.label {
        let _ = writeln!(out, "# label={}", label.replace('\n', " "));
    }
    if let Some(rbw) = meta.resolution_bw_nm {
        let _ = writeln!(out, "# rbw_nm={rbw}");
    }
    if let Some(sm) = meta.smoothing_nm {
        let _ = writeln!(out, "# smoothing_nm={sm}");
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    let unit = trace.unit.as_str();
    for p in &trace.points {
        let _ = writeln!(out, "{},{},{}", p.wavelength_nm, p.value, unit);
    }
    out
}

pub fn read_trace<R: Read>(mut reader: R) -> Result<SpectrumTrace> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse_trace(&text)
}

pub fn parse_trace(text: &str) -> Result<SpectrumTrace> {
    let mut meta = TraceMeta::default();
    let mut body_start = 0;
    let mut header_line = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if let Some(rest) = trimmed.strip_prefix('#') {
            parse_meta_line(rest.trim(), i + 1, &mut meta)?;
            body_start += line.len();
            continue;
        }
        header_line = i + 1;
        break;
    }
    let body = &text[body_start..];

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Trace {
        row: 0,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != ["wavelength_nm", "value", "unit"] {
        return Err(Error::Parse {
            line: header_line.max(1),
            message: format!(
                "expected header `{TRACE_HEADER}`, found `{}`",
                got.join(",")
            ),
        });
    }

    let mut points = Vec::new();
    let mut unit: Option<Unit> = None;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Trace {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let parse_num = |k: usize, what: &str| {
            field(k).parse::<f64>().map_err(|_| Error::Trace {
                row,
                message: format!("cannot parse {what} `{}`", field(k)),
            })
        };
        let wavelength_nm = parse_num(0, "wavelength")?;
        let value = parse_num(1, "value")?;
        let row_unit = Unit::parse(field(2)).ok_or_else(|| Error::Trace {
            row,
            message: format!("unit must be `db` or `ratio`, found `{}`", field(2)),
        })?;
        match unit {
            None => unit = Some(row_unit),
            Some(u) if u != row_unit => {
                return Err(Error::Trace {
                    row,
                    message: "mixed units in one trace".into(),
                })
            }
            _ => {}
        }
        points.push(TracePoint {
            wavelength_nm,
            value,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("trace has no samples"));
    }
    Ok(SpectrumTrace::new(points, unit.unwrap_or(Unit::Ratio))?.with_meta(meta))
}

fn parse_meta_line(rest: &str, line: usize, meta: &mut TraceMeta) -> Result<()> {
    let Some((key, value)) = rest.split_once('=') else {
        // free-form comment
        return Ok(());
    };
    let num = |v: &str| {
        v.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("cannot parse `{}`", v.trim()),
        })
    };
    match key.trim() {
        "label" => meta.label = Some(value.trim().to_string()),
        "rbw_nm" => meta.resolution_bw_nm = Some(num(value)?),
        "smoothing_nm" => meta.smoothing_nm = Some(num(value)?),
        _ => {}
    }
    Ok(())
}
