//! Flat `key = value` configuration with dotted sections.
//!
//! ```text
//! # comment
//! problem.kind = quadratic
//! problem.mu = 1.0
//! schedule.kind = paper_sqrt
//! curves = gd, agd
//! curve.agd.solver.method = agd
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Keys accepted at top level and, minus the first two, per curve.
pub const KEYS: &[&str] = &[
    "experiment",
    "name",
    "curves",
    "problem.kind",
    "problem.mu",
    "problem.l",
    "problem.coupling.offset",
    "problem.coupling.amplitude",
    "problem.noise_sampler",
    "basis.family",
    "basis.nodes",
    "oracle.mode",
    "oracle.samples",
    "oracle.q_convention",
    "schedule.kind",
    "schedule.level",
    "schedule.levels",
    "solver.method",
    "solver.step",
    "solver.gamma",
    "solver.beta",
    "solver.gamma0",
    "solver.iterations",
    "run.trials",
    "run.seed",
    "run.timing",
    "run.workers",
];

/// Keys a curve may override.
pub fn curve_key_allowed(key: &str) -> bool {
    ["problem.", "oracle.", "schedule.", "solver."]
        .iter()
        .any(|p| key.starts_with(p))
        && KEYS.contains(&key)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            check_key(k).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Entries of `other` replace ours.
    pub fn merged(&self, other: &Config) -> Config {
        let mut out = self.clone();
        out.entries.extend(other.entries.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn value_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.value(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
        }
    }

    /// Comma-separated list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    /// Top-level entries with `curve.<name>.` overrides applied.
    pub fn for_curve(&self, name: &str) -> Config {
        let prefix = format!("curve.{name}.");
        let mut out = Config::default();
        for (k, v) in &self.entries {
            if let Some(rest) = k.strip_prefix(&prefix) {
                out.entries.insert(rest.to_string(), v.clone());
            } else if !k.starts_with("curve.") {
                out.entries.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        out
    }

    /// Curve names appearing in `curve.<name>.*` keys.
    pub fn curve_overrides(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .entries
            .keys()
            .filter_map(|k| k.strip_prefix("curve."))
            .filter_map(|r| r.split_once('.').map(|(n, _)| n.to_string()))
            .collect();
        names.dedup();
        names
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}

fn check_key(k: &str) -> Result<()> {
    if let Some(rest) = k.strip_prefix("curve.") {
        let (name, key) = rest
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("`{k}`: expected `curve.<name>.<key>`")))?;
        if name.is_empty() || !curve_key_allowed(key) {
            return Err(Error::Config(format!("`{k}`: not a per-curve key")));
        }
        return Ok(());
    }
    if KEYS.contains(&k) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key `{k}`")))
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let c = Config::parse(
            "# header\nproblem.mu = 1.0   # inline\n\ncurves = gd, agd\ncurve.agd.solver.method = agd\nsolver.method = gd\n",
        )
        .unwrap();
        assert_eq!(c.value::<f64>("problem.mu").unwrap(), Some(1.0));
        assert_eq!(c.list("curves"), vec!["gd", "agd"]);
        assert_eq!(c.for_curve("agd").get("solver.method"), Some("agd"));
        assert_eq!(c.for_curve("gd").get("solver.method"), Some("gd"));
        assert_eq!(c.curve_overrides(), vec!["agd"]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("problem.mu 1").is_err());
        assert!(Config::parse("problem.nu = 1").is_err());
        assert!(Config::parse("a.b = 1\na.b = 2").is_err());
        assert!(Config::parse("problem.mu = 1\nproblem.mu = 2").is_err());
        assert!(Config::parse("curve.x.run.trials = 3").is_err());
        let c = Config::parse("problem.mu = abc").unwrap();
        assert!(c.value::<f64>("problem.mu").is_err());
    }

    #[test]
    fn display_round_trips() {
        let c = Config::parse("run.seed = 4\nproblem.l = 200").unwrap();
        assert_eq!(Config::parse(&c.to_string()).unwrap(), c);
    }
}
