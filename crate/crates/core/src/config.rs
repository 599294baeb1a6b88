//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! override earlier ones, and [`KvConfig::set`] applies `key=value` overrides
//! on top (the CLI's `--set`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "TERMNORM_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set(line).map_err(|_| Error::parse(origin, i + 1, format!("expected key = value, got {line:?}")))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got {assignment:?}")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::InvalidArgument(format!("empty key in {assignment:?}")));
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get_str(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidArgument(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on any key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::InvalidArgument(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    /// Sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
