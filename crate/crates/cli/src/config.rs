//! Flat `key=value` run configuration. Command-line flags override file
//! values; keys a command does not know are rejected by name.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Blank lines and lines starting with `#` are ignored. Keys may appear
    /// once.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, got {line:?}", n + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(CliError::Config(format!("config line {}: empty key", n + 1)));
            }
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("config key {k:?} given twice")));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Config(format!(
                "unknown config key {k:?} (known: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Config(format!("config key {key}: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    /// The flag if given, else the file value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// As [`RunConfig::pick_opt`], failing when neither source sets the key.
    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick_opt(flag, key)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing required setting {key} (flag --{})",
                key.replace('_', "-")
            ))
        })
    }
}
