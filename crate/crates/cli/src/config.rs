//! Line-based `key = value` configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [solver]
//! mode = patch
//! mu = 0.05
//! ```
//!
//! Keys are addressed as `section.key`. Values stay strings until a command
//! reads them, so type errors name the offending key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("missing required section `[{section}]`")]
    MissingSection { section: String },
    #[error("unknown key `{key}`")]
    Unknown { key: String },
    #[error("cannot read config `{path}`: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').map(str::trim).unwrap_or("");
                if !is_name(name) {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("bad section header `{body}`"),
                    });
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, found `{body}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(section) = &current else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("key `{k}` appears before any section"),
                });
            };
            if !is_name(k) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("bad key `{k}`"),
                });
            }
            let entries = cfg.sections.get_mut(section).expect("section exists");
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("duplicate key `{section}.{k}`"),
                });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Sets `section.key`, creating the section if needed.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<(), ConfigError> {
        let (section, key) = dotted
            .split_once('.')
            .filter(|(s, k)| is_name(s) && is_name(k))
            .ok_or_else(|| ConfigError::Invalid {
                key: dotted.to_string(),
                value: value.to_string(),
                reason: "override keys have the form section.key".into(),
            })?;
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e: T::Err| ConfigError::Invalid {
                    key: format!("{section}.{key}"),
                    value: v.to_string(),
                    reason: e.to_string(),
                }),
        }
    }

    pub fn get_or<T>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(section, key)?.ok_or_else(|| ConfigError::Missing {
            key: format!("{section}.{key}"),
        })
    }

    /// Fails on any key of `section` outside `allowed`.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        if let Some(entries) = self.sections.get(section) {
            if let Some(k) = entries.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(ConfigError::Unknown {
                    key: format!("{section}.{k}"),
                });
            }
        }
        Ok(())
    }

    /// Fails on any section outside `allowed`.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self
            .sections
            .keys()
            .find(|s| !allowed.contains(&s.as_str()))
        {
            Some(s) => Err(ConfigError::Unknown {
                key: format!("[{s}]"),
            }),
            None => Ok(()),
        }
    }

    pub fn invalid(section: &str, key: &str, value: &str, reason: &str) -> ConfigError {
        ConfigError::Invalid {
            key: format!("{section}.{key}"),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }
}
