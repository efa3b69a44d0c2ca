//! Scenario files: one `section.key = value` assignment per line, `#`
//! starts a comment. Every key is checked against the known set so typos
//! fail loudly with their line number.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::dispersion::{DispersionModel, DEFAULT_CENTER_THZ};
use crate::error::{Error, Result};
use crate::lockloop::LockLoopConfig;
use crate::measurement::OpaGain;
use crate::sideband::{true_levels, QuadLevels, SqueezerParams};
use crate::trace::wavelength_grid;

/// The scenario used by `replicate-paper` and the acceptance suite.
pub const PAPER_REPLICA: &str = include_str!("../fixtures/paper_replica.cfg");

const KNOWN_KEYS: &[&str] = &[
    "squeezer.a",
    "squeezer.loss",
    "squeezer.pump",
    "levels.r_minus_db",
    "levels.r_plus_db",
    "gain.g",
    "gain.g_db",
    "dispersion.d",
    "dispersion.f0",
    "dispersion.phi0",
    "grid.start_nm",
    "grid.stop_nm",
    "grid.step_nm",
    "lock.ki",
    "lock.dt",
    "lock.target",
    "lock.lock_wavelength_nm",
    "lock.noise_rms",
    "lock.drift_rate",
    "lock.max_steps",
    "lock.tolerance",
    "fit.sweep",
    "run.seed",
    "run.output_dir",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
}

impl GridSpec {
    pub const DEFAULT: GridSpec = GridSpec {
        start_nm: 1500.0,
        stop_nm: 1590.0,
        step_nm: 0.1,
    };

    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        wavelength_grid(self.start_nm, self.stop_nm, self.step_nm)
    }
}

/// Lock settings as written; unset fields fall back to
/// [`LockLoopConfig::new`] defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LockSection {
    pub ki: Option<f64>,
    pub dt: Option<f64>,
    pub target: Option<f64>,
    pub lock_wavelength_nm: Option<f64>,
    pub noise_rms: Option<f64>,
    pub drift_rate: Option<f64>,
    pub max_steps: Option<usize>,
    pub tolerance: Option<f64>,
}

impl LockSection {
    /// Concrete loop settings; an unset target means mid-slope.
    pub fn to_config(&self, levels: &QuadLevels) -> Result<LockLoopConfig> {
        let wl = self.lock_wavelength_nm.unwrap_or(1545.0);
        let mut cfg = match self.target {
            Some(t) => LockLoopConfig::new(t, wl),
            None => LockLoopConfig::mid_slope(levels, wl),
        };
        if let Some(v) = self.ki {
            cfg.ki = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.noise_rms {
            cfg.noise_rms = v;
        }
        if let Some(v) = self.drift_rate {
            cfg.drift_rate = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        cfg.tolerance = self.tolerance;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioConfig {
    pub squeezer: Option<SqueezerParams>,
    pub levels: Option<QuadLevels>,
    /// `levels` as written, dB.
    pub levels_db: Option<(f64, f64)>,
    pub gain: Option<OpaGain>,
    pub dispersion: Option<DispersionModel>,
    pub grid: Option<GridSpec>,
    pub lock: Option<LockSection>,
    pub fit_sweep: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Explicit levels win over the squeezer model.
    pub fn resolved_levels(&self) -> Result<Option<QuadLevels>> {
        match (self.levels, self.squeezer) {
            (Some(l), _) => Ok(Some(l)),
            (None, Some(s)) => true_levels(&s).map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn require_levels(&self) -> Result<QuadLevels> {
        self.resolved_levels()?.ok_or_else(|| {
            Error::Validation("scenario needs a [levels] or [squeezer] section".into())
        })
    }

    pub fn require_dispersion(&self) -> Result<DispersionModel> {
        self.dispersion
            .ok_or_else(|| Error::Validation("scenario needs a [dispersion] section".into()))
    }

    pub fn paper_replica() -> ScenarioConfig {
        parse_config(PAPER_REPLICA).expect("bundled scenario parses")
    }
}

struct Entry<'a> {
    value: &'a str,
    line: usize,
}

struct Fields<'a> {
    map: HashMap<&'a str, Entry<'a>>,
}

impl<'a> Fields<'a> {
    fn has_section(&self, section: &str) -> bool {
        self.map
            .keys()
            .any(|k| k.split_once('.').is_some_and(|(s, _)| s == section))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line: e.line,
                message: format!("cannot parse `{}` for {key}", e.value),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Validation(format!("missing required key {key}")))
    }
}

fn named(key: &str, err: Error) -> Error {
    Error::Validation(format!("{key}: {err}"))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut map: HashMap<&str, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected `section.key = value`, found `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("empty value for {key}"),
            });
        }
        if let Some(prev) = map.get(key) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key `{key}` (lines {} and {line})", prev.line),
            });
        }
        map.insert(key, Entry { value, line });
    }
    let f = Fields { map };

    let squeezer = if f.has_section("squeezer") {
        let s = SqueezerParams {
            a: f.require("squeezer.a")?,
            loss: f.require("squeezer.loss")?,
            pump: f.require("squeezer.pump")?,
        };
        s.validate().map_err(|e| named("squeezer", e))?;
        Some(s)
    } else {
        None
    };

    let levels_db: Option<(f64, f64)> = if f.has_section("levels") {
        Some((
            f.require("levels.r_minus_db")?,
            f.require("levels.r_plus_db")?,
        ))
    } else {
        None
    };
    let levels = levels_db
        .map(|(m, p)| QuadLevels::from_db(m, p).map_err(|e| named("levels", e)))
        .transpose()?;

    let gain = match (f.get::<f64>("gain.g")?, f.get::<f64>("gain.g_db")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation(
                "gain: set either gain.g or gain.g_db, not both".into(),
            ))
        }
        (Some(g), None) => Some(OpaGain::new(g).map_err(|e| named("gain.g", e))?),
        (None, Some(db)) => Some(OpaGain::from_db(db).map_err(|e| named("gain.g_db", e))?),
        (None, None) => None,
    };

    let dispersion = if f.has_section("dispersion") {
        Some(
            DispersionModel::new(
                f.require("dispersion.d")?,
                f.get("dispersion.f0")?.unwrap_or(DEFAULT_CENTER_THZ),
                f.get("dispersion.phi0")?.unwrap_or(0.0),
            )
            .map_err(|e| named("dispersion", e))?,
        )
    } else {
        None
    };

    let grid = if f.has_section("grid") {
        let g = GridSpec {
            start_nm: f.require("grid.start_nm")?,
            stop_nm: f.require("grid.stop_nm")?,
            step_nm: f.require("grid.step_nm")?,
        };
        g.wavelengths().map_err(|e| named("grid", e))?;
        Some(g)
    } else {
        None
    };

    let lock = if f.has_section("lock") {
        Some(LockSection {
            ki: f.get("lock.ki")?,
            dt: f.get("lock.dt")?,
            target: f.get("lock.target")?,
            lock_wavelength_nm: f.get("lock.lock_wavelength_nm")?,
            noise_rms: f.get("lock.noise_rms")?,
            drift_rate: f.get("lock.drift_rate")?,
            max_steps: f.get("lock.max_steps")?,
            tolerance: f.get("lock.tolerance")?,
        })
    } else {
        None
    };

    let cfg = ScenarioConfig {
        squeezer,
        levels,
        levels_db,
        gain,
        dispersion,
        grid,
        lock,
        fit_sweep: f.get::<String>("fit.sweep")?.map(PathBuf::from),
        seed: f.get("run.seed")?,
        output_dir: f.get::<String>("run.output_dir")?.map(PathBuf::from),
    };
    if let (Some(lock), Some(levels)) = (cfg.lock, cfg.resolved_levels()?) {
        lock.to_config(&levels).map_err(|e| named("lock", e))?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_squeezer_only() {
        let cfg = parse_config("squeezer.a = 19.1\nsqueezer.loss = 0.425\nsqueezer.pump = 0.05\n")
            .unwrap();
        assert_eq!(cfg.squeezer.unwrap().a, 19.1);
        assert!(cfg.dispersion.is_none());
        assert!(cfg.require_levels().is_ok());
        assert!(cfg.require_dispersion().is_err());
    }

    #[test]
    fn paper_replica_parses() {
        let cfg = ScenarioConfig::paper_replica();
        let s = cfg.squeezer.unwrap();
        assert_eq!((s.a, s.loss, s.pump), (20.1, 0.487, 0.1));
        assert_eq!(cfg.gain.unwrap().linear(), 200.0);
        assert_eq!(cfg.dispersion.unwrap().d, 0.033);
        assert_eq!(cfg.grid.unwrap(), GridSpec::DEFAULT);
        assert_eq!(cfg.seed, Some(2021));
        let lock = cfg
            .lock
            .unwrap()
            .to_config(&cfg.require_levels().unwrap())
            .unwrap();
        assert_eq!(lock.lock_wavelength_nm, 1545.0);
        assert_eq!(lock.max_steps, 20000);
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let err = parse_config("gain.g = 20\n# x\ngain.g = 30\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(msg.contains("lines 1 and 3"), "{msg}");
    }

    #[test]
    fn unknown_and_malformed_lines() {
        let err = parse_config("gain.g = 20\nsqueezer.alpha = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_config("just words\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_config("gain.g = twenty\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_config("gain.g =\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let err = parse_config("squeezer.a = 19.1\nsqueezer.loss = 1.5\nsqueezer.pump = 0.1\n")
            .unwrap_err();
        assert!(err.to_string().contains("loss"), "{err}");
        let err = parse_config("squeezer.a = 19.1\n").unwrap_err();
        assert!(err.to_string().contains("squeezer.loss"), "{err}");
        let err = parse_config("grid.start_nm = 1500\ngrid.stop_nm = 1590\ngrid.step_nm = 0\n")
            .unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
        let err = parse_config("gain.g = 2\ngain.g_db = 3\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let err = parse_config("levels.r_minus_db = -3\nlevels.r_plus_db = 6\nlock.dt = -1\n")
            .unwrap_err();
        assert!(err.to_string().contains("lock"), "{err}");
    }

    #[test]
    fn explicit_levels_take_precedence() {
        let cfg = parse_config(
            "levels.r_minus_db = -1.2\nlevels.r_plus_db = 7.1\n\
             squeezer.a = 20\nsqueezer.loss = 0.5\nsqueezer.pump = 0.1\n",
        )
        .unwrap();
        let l = cfg.require_levels().unwrap();
        assert!((l.r_minus_db() - -1.2).abs() < 1e-12);
    }
}
