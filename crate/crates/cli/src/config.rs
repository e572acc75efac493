//! `key=value` run configuration merged from a file and command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Bad invocation: unknown key, missing value, unparsable value. Exits 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// One accepted option; its flag is `--<name>`.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub required: bool,
    pub help: &'static str,
}

pub const fn opt(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
        required: false,
        help,
    }
}

pub const fn maybe(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: None,
        required: false,
        help,
    }
}

pub const fn req(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: None,
        required: true,
        help,
    }
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key=value, got '{line}'", i + 1));
        };
        let k = k.trim();
        if k.is_empty() {
            return usage(format!("config line {}: empty key", i + 1));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults, then file entries, then flags. Unknown file keys and
    /// missing required keys are usage errors.
    pub fn resolve(
        command: &str,
        keys: &[Key],
        file: &[(String, String)],
        flags: &[(String, String)],
    ) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        for k in keys {
            if let Some(d) = k.default {
                values.insert(k.name.to_string(), d.to_string());
            }
        }
        for (k, v) in file.iter().chain(flags) {
            if !keys.iter().any(|key| key.name == k) {
                return usage(format!("unknown key '{k}' for '{command}'"));
            }
            values.insert(k.clone(), v.clone());
        }
        for k in keys.iter().filter(|k| k.required) {
            if !values.contains_key(k.name) {
                return usage(format!("'{command}' needs --{}", k.name));
            }
        }
        Ok(RunConfig {
            command: command.to_string(),
            values,
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> anyhow::Result<&str> {
        match self.values.get(key) {
            Some(v) => Ok(v),
            None => usage(format!("missing --{key}")),
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<T> {
        let raw = self.str(key)?;
        match raw.parse() {
            Ok(v) => Ok(v),
            Err(_) => usage(format!("bad value '{raw}' for {key}")),
        }
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>> {
        if self.has(key) {
            self.get(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> anyhow::Result<Vec<T>> {
        let raw = self.str(key)?;
        raw.split(',')
            .map(|p| match p.trim().parse() {
                Ok(v) => Ok(v),
                Err(_) => usage(format!("bad list entry '{p}' for {key}")),
            })
            .collect()
    }

    /// Fills a key the command computes itself, unless already given.
    pub fn default_to(&mut self, key: &str, value: impl ToString) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    /// The resolved configuration in config-file syntax.
    pub fn render(&self) -> String {
        let mut s = format!("# tifl {}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}
