//! Flat sectioned key-value configuration files.
//!
//! Grammar, one construct per line:
//!
//! ```text
//! # comment (also ';'); blank lines ignored
//! [section]          // a subcommand name, or "shared" for every command
//! key = value        // keys are the long CLI flag names without "--"
//! ```
//!
//! Values keep their literal text; whatever parses a flag parses its config
//! value. Command-line flags always override file values, and a command
//! section overrides `[shared]`.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<ConfigFile> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    bail!("line {}: unterminated section header", lineno + 1);
                };
                let name = name.trim();
                if name.is_empty() {
                    bail!("line {}: empty section name", lineno + 1);
                }
                current = Some(name.to_string());
                sections.entry(name.to_string()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected 'key = value', got '{line}'", lineno + 1);
            };
            let Some(section) = &current else {
                bail!("line {}: key outside any [section]", lineno + 1);
            };
            let key = key.trim();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            let prev = sections
                .get_mut(section)
                .expect("section inserted on header")
                .insert(key.to_string(), value.trim().to_string());
            if prev.is_some() {
                bail!("line {}: duplicate key '{key}' in [{section}]", lineno + 1);
            }
        }
        Ok(ConfigFile { sections })
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .or_else(|| self.sections.get("shared").and_then(|s| s.get(key)))
            .map(String::as_str)
    }
}

/// Three-way flag resolution for one subcommand: CLI value, then config
/// value (command section before `[shared]`), then the built-in default.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    section: &'a str,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, section: &'a str) -> Self {
        Resolver { file, section }
    }

    pub fn string(&self, cli: Option<String>, key: &str) -> Option<String> {
        cli.or_else(|| self.file.raw(self.section, key).map(str::to_string))
    }

    pub fn parsed<T>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.file.raw(self.section, key) {
            Some(text) => text
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("config key '{key}' in [{}]: {e}", self.section)),
            None => Ok(default),
        }
    }

    pub fn flag(&self, cli: bool, key: &str) -> Result<bool> {
        if cli {
            return Ok(true);
        }
        match self.file.raw(self.section, key) {
            Some(text) => match text {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                other => bail!("config key '{key}': expected a boolean, got '{other}'"),
            },
            None => Ok(false),
        }
    }
}
