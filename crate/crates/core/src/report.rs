//! Plain-text `key = value` run reports.
//!
//! Inputs are echoed under `input.` using the scenario-file key names, so
//! the input block of a report is itself a valid scenario.

use std::fmt;

use crate::error::Result;
use crate::scenario::{parse_config, ScenarioConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    entries: Vec<(String, String)>,
}

impl RunReport {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        let mut r = RunReport::default();
        r.push("tool_version", TOOL_VERSION);
        r.push("command", command);
        if let Some(seed) = seed {
            r.push("seed", seed);
        }
        r
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn input(&mut self, key: &str, value: impl fmt::Display) {
        self.push(format!("input.{key}"), value);
    }

    pub fn output(&mut self, key: &str, value: impl fmt::Display) {
        self.push(format!("output.{key}"), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// The echoed inputs as scenario-file text.
    pub fn inputs_as_scenario(&self) -> String {
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("input.").map(|k| format!("{k} = {v}\n")))
            .collect()
    }

    pub fn replay_config(&self) -> Result<ScenarioConfig> {
        parse_config(&self.inputs_as_scenario())
    }

    /// Echo every populated scenario field.
    pub fn echo_scenario(&mut self, cfg: &ScenarioConfig) {
        if let Some(s) = cfg.squeezer {
            self.input("squeezer.a", s.a);
            self.input("squeezer.loss", s.loss);
            self.input("squeezer.pump", s.pump);
        }
        if let Some((m, p)) = cfg.levels_db {
            self.input("levels.r_minus_db", m);
            self.input("levels.r_plus_db", p);
        }
        if let Some(g) = cfg.gain {
            self.input("gain.g", g.linear());
        }
        if let Some(d) = cfg.dispersion {
            self.input("dispersion.d", d.d);
            self.input("dispersion.f0", d.f0);
            self.input("dispersion.phi0", d.phi0);
        }
        if let Some(g) = cfg.grid {
            self.input("grid.start_nm", g.start_nm);
            self.input("grid.stop_nm", g.stop_nm);
            self.input("grid.step_nm", g.step_nm);
        }
        if let Some(l) = cfg.lock {
            let fields = [
                ("lock.ki", l.ki),
                ("lock.dt", l.dt),
                ("lock.target", l.target),
                ("lock.lock_wavelength_nm", l.lock_wavelength_nm),
                ("lock.noise_rms", l.noise_rms),
                ("lock.drift_rate", l.drift_rate),
                ("lock.tolerance", l.tolerance),
            ];
            for (k, v) in fields {
                if let Some(v) = v {
                    self.input(k, v);
                }
            }
            if let Some(n) = l.max_steps {
                self.input("lock.max_steps", n);
            }
        }
        if let Some(p) = &cfg.fit_sweep {
            self.input("fit.sweep", p.display());
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// One decimal place, matching how levels are quoted.
pub fn db1(x: f64) -> String {
    format!("{x:.1}")
}
