//! `key = value` run configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::CliError;

/// Flattened `section.key -> value` map. Later sources override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("werner", include_str!("../presets/werner.conf")),
    ("g1werner", include_str!("../presets/g1werner.conf")),
    ("g2werner-m1", include_str!("../presets/g2werner-m1.conf")),
    ("g2werner-m2", include_str!("../presets/g2werner-m2.conf")),
    ("g2werner-m3", include_str!("../presets/g2werner-m3.conf")),
    (
        "general-1-4-4",
        include_str!("../presets/general-1-4-4.conf"),
    ),
    (
        "general-9-2-2",
        include_str!("../presets/general-9-2-2.conf"),
    ),
    ("general-m8", include_str!("../presets/general-m8.conf")),
    ("general-m9", include_str!("../presets/general-m9.conf")),
    ("general-m10", include_str!("../presets/general-m10.conf")),
    ("general-m11", include_str!("../presets/general-m11.conf")),
    ("general-m12", include_str!("../presets/general-m12.conf")),
    ("general-m13", include_str!("../presets/general-m13.conf")),
    ("general-m14", include_str!("../presets/general-m14.conf")),
    ("general-m15", include_str!("../presets/general-m15.conf")),
];

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    CliError::Config(format!("line {}: unterminated section header", n + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", n + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.entries.insert(full, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!(
                    "unknown preset '{name}' (known: {})",
                    known.join(", ")
                ))
            })?;
        Config::parse(text)
    }

    pub fn merge(&mut self, other: Config) {
        self.entries.extend(other.entries);
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("{key} = '{v}': {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        self.get_str(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(CliError::Config(format!(
                    "{key} = '{other}': expected true or false"
                ))),
            })
            .transpose()
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        self.get_str(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|e| CliError::Config(format!("{key} = '{v}': {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Canonical text form, one section per block, keys sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut current: Option<&str> = None;
        for (full, value) in &self.entries {
            let (section, key) = full.split_once('.').unwrap_or(("", full));
            if current != Some(section) {
                if current.is_some() {
                    out.push('\n');
                }
                if !section.is_empty() {
                    let _ = writeln!(out, "[{section}]");
                }
                current = Some(section);
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
