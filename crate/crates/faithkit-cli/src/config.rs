//! Flat key=value config file handling. Keys mirror the long flag names
//! (without the leading dashes); explicit flags always win.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{usage, CliError};

#[derive(Debug, Default)]
pub struct ConfigMap {
    values: HashMap<String, String>,
}

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let content = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("failed to read config {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                usage(format!(
                    "{}:{}: expected key=value, got {trimmed:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the config entry, else the default.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(value) = flag {
            return Ok(value);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| usage(format!("config key {key} has unparsable value {raw:?}"))),
            None => Ok(default),
        }
    }

    /// Like [`ConfigMap::resolve`] but with no default; `None` when absent.
    pub fn resolve_opt<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key {key} has unparsable value {raw:?}"))),
            None => Ok(None),
        }
    }
}
