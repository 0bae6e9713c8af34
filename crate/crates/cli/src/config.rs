use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::CliError;

/// Settings from a `--config` JSON file. Keys are flag names with
/// underscores (`max_len`, `ef_search`). A key may also sit under a section
/// named after the subcommand, which wins over the top level.
#[derive(Debug, Default)]
pub struct FileConfig {
    top: Map<String, Value>,
    section: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut top) = value else {
            return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
        };
        let section = match top.remove(command) {
            Some(Value::Object(m)) => m,
            _ => Map::new(),
        };
        Ok(FileConfig { top, section })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.section.get(key).or_else(|| self.top.get(key)) else {
            return Ok(None);
        };
        serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Like [`FileConfig::pick`] for values given as strings on the command
    /// line and parsed with `FromStr`.
    pub fn pick_parsed<T>(&self, flag: Option<&str>, key: &str, default: T) -> Result<T, CliError>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let raw: Option<String> = match flag {
            Some(s) => Some(s.to_string()),
            None => self.get(key)?,
        };
        match raw {
            Some(s) => s.parse().map_err(|e| CliError::Usage(format!("{key}: {e}"))),
            None => Ok(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_sections_beat_top_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"k": 3, "tau": 0.7, "query": {"k": 5}}"#).unwrap();
        let cfg = FileConfig::load(Some(&path), "query").unwrap();
        assert_eq!(cfg.pick(None, "k", 10usize).unwrap(), 5);
        assert_eq!(cfg.pick(Some(7), "k", 10usize).unwrap(), 7);
        assert_eq!(cfg.pick(None, "tau", 0.5f64).unwrap(), 0.7);
        assert_eq!(cfg.pick(None, "top_n", 64usize).unwrap(), 64);

        let other = FileConfig::load(Some(&path), "bench").unwrap();
        assert_eq!(other.pick(None, "k", 10usize).unwrap(), 3);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "[1, 2]").unwrap();
        assert!(matches!(FileConfig::load(Some(&path), "x"), Err(CliError::Usage(_))));
        std::fs::write(&path, r#"{"k": "many"}"#).unwrap();
        let cfg = FileConfig::load(Some(&path), "x").unwrap();
        assert!(cfg.pick(None, "k", 1usize).is_err());
    }
}
