//! Plain-text `key=value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

/// The effective settings of one run: file entries overlaid with
/// command-line `key=value` pairs. Keys are validated against the active
/// command's allowed set before use, and the whole map can be echoed for
/// logs and manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses config file text: one `key=value` per line, `#` comments and
    /// blank lines ignored. Duplicate keys are rejected — silently keeping
    /// one of two values invites irreproducible runs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_pair(line)
                .ok_or_else(|| CliError::validation(format!(
                    "config line {}: expected `key=value`, got {line:?}",
                    lineno + 1
                )))?;
            if cfg.entries.contains_key(key) {
                return Err(CliError::validation(format!(
                    "config line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            cfg.entries.insert(key.to_string(), value.to_string());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override (replacing any file value).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = split_pair(pair).ok_or_else(|| {
            CliError::validation(format!("override {pair:?} is not `key=value`"))
        })?;
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Rejects any key outside the command's vocabulary, naming both the
    /// offender and what would have been accepted.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::validation(format!(
                    "unknown config key {key:?}; allowed keys: {}",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::validation(format!("missing required config key {key:?}")))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Typed lookup with a default for absent keys.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                CliError::validation(format!("config key {key:?} has unparsable value {raw:?}"))
            }),
        }
    }

    /// `true`/`false` with a default.
    pub fn get_flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(CliError::validation(format!(
                "config key {key:?} must be true or false, got {other:?}"
            ))),
        }
    }

    /// Sorted `key=value` lines — the effective configuration as echoed to
    /// logs and recorded in manifests.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (key, value) = s.split_once('=')?;
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
        return None;
    }
    Some((key, value))
}
