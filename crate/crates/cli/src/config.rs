//! `key = value` configuration files. Keys use the long flag names;
//! `#` starts a comment. Flags given on the command line win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "regime",
    "grid-step",
    "reps",
    "periods",
    "seed",
    "a",
    "b",
    "delta-sign",
    "tick-mode",
    "tra-anchor",
    "epsilon-sigma",
    "workers",
    "keep-series",
    "m-s",
    "m-d",
    "output",
    "metric",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", no + 1)))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key `{key}`; known keys: {}",
                    no + 1,
                    KEYS.join(", ")
                )));
            }
            values.insert(key, value.trim().trim_matches('"').to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let c = ConfigFile::parse("# desk run\nreps = 100\ngrid_step=0.05  # coarse\n\nregime = hrt,tra-s\n").unwrap();
        assert_eq!(c.get::<u32>("reps").unwrap(), Some(100));
        assert_eq!(c.get::<f64>("grid-step").unwrap(), Some(0.05));
        assert_eq!(c.raw("regime"), Some("hrt,tra-s"));
        assert_eq!(c.get::<u32>("periods").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(ConfigFile::parse("speed = 3").is_err());
        assert!(ConfigFile::parse("reps 100").is_err());
        let c = ConfigFile::parse("reps = many").unwrap();
        assert!(c.get::<u32>("reps").is_err());
    }
}
