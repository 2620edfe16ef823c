//! Key=value configuration files for the solve and experiment subcommands.
//! Flags override file values; parse -> emit -> parse is the identity on the
//! recognized keys.

use std::collections::BTreeMap;

/// Keys the solve and experiment subcommands understand.
pub const RECOGNIZED: &[&str] = &[
    "problem",
    "alpha",
    "beta",
    "lambda1",
    "lambda2",
    "gamma3",
    "m",
    "n",
    "domain",
    "t-final",
    "solver",
    "precond",
    "omega",
    "coarsening",
    "nu1",
    "nu2",
    "min-size",
    "tol",
    "maxit",
    "table",
    "reps",
    "format",
    "output",
];

/// Parsed configuration file: recognized keys and their raw values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<FileConfig, String> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value, got {raw:?}", idx + 1))?;
            let key = key.trim();
            if !RECOGNIZED.contains(&key) {
                return Err(format!("config line {}: unrecognized key {key:?}", idx + 1));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// One sorted `key=value` line per entry.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            out.push_str(key);
            out.push('=');
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }
}
