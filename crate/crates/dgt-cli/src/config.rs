//! Shared error type with the exit-code policy, plus the key=value
//! defaults file that flags override.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Command outcomes that are not success. The split mirrors the exit-code
/// contract: usage and configuration problems (nothing was computed) exit
/// with 2, computations that ran and failed their contract exit with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn failed(msg: impl Into<String>) -> CliError {
    CliError::Failed(msg.into())
}

/// Defaults loaded from a `key=value` file. Lookups are typed; any value
/// that fails to parse is a usage error naming the key.
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    /// Loads the file when a path is given, otherwise stays empty. Keys
    /// outside `allowed` are rejected so typos cannot silently lose a
    /// setting. Blank lines and `#` comments are ignored.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let Some(path) = path else {
            return Ok(Self { entries });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!("config {}: expected key=value, got {line:?}", path.display())));
            };
            let (key, value) = (key.trim(), value.trim());
            if !allowed.contains(&key) {
                return Err(usage(format!(
                    "config {}: unknown key {key:?} (expected one of: {})",
                    path.display(),
                    allowed.join(", ")
                )));
            }
            entries.insert(key.to_string(), value.to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Typed lookup; absent keys are `None`, malformed values are usage
    /// errors.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    /// Boolean lookup accepting true/false/1/0, defaulting to false.
    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => Err(usage(format!("config key {key}: expected true/false, got {other:?}"))),
        }
    }
}
