//! Flat `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys
//! are kept sorted so rendering is deterministic. Layers merge with
//! [`FlatConfig::overlay`], later layers winning.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses a single `key=value` override.
    pub fn parse_override(text: &str) -> Result<(String, String)> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {text:?} is not key=value")))?;
        if k.trim().is_empty() {
            return Err(Error::Config(format!("override {text:?} has an empty key")));
        }
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("key {key:?}: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| Error::Config(format!("key {key:?}: cannot parse {s:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> FlatConfig {
        let lead = format!("{prefix}.");
        FlatConfig {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&lead).map(|rest| (rest.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Copies every entry of `other` into `self`, prefixed with `prefix.`.
    pub fn insert_section(&mut self, prefix: &str, other: &FlatConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    /// Entries of `upper` replace those of `self`.
    pub fn overlay(&mut self, upper: &FlatConfig) {
        for (k, v) in &upper.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Fails on any key outside `known`.
    pub fn expect_keys(&self, known: &[&str], context: &str) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("{context}: unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let cfg = FlatConfig::parse("# header\n a = 1 \n\nb=two # trailing\n").unwrap();
        assert_eq!(cfg.get::<u32>("a").unwrap(), Some(1));
        assert_eq!(cfg.raw("b"), Some("two"));
        assert_eq!(cfg.render(), "a = 1\nb = two\n");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(FlatConfig::parse("novalue\n").is_err());
        assert!(FlatConfig::parse("= 3\n").is_err());
        assert!(FlatConfig::parse("a = 1\na = 2\n").is_err());
        let cfg = FlatConfig::parse("a = x\n").unwrap();
        assert!(matches!(cfg.get::<u32>("a"), Err(Error::Config(_))));
    }

    #[test]
    fn overlay_and_sections() {
        let mut base = FlatConfig::parse("net.kernel_width = 5\nseed = 1\n").unwrap();
        base.overlay(&FlatConfig::parse("seed = 9\n").unwrap());
        assert_eq!(base.get::<u64>("seed").unwrap(), Some(9));
        let net = base.section("net");
        assert_eq!(net.get::<usize>("kernel_width").unwrap(), Some(5));
        assert_eq!(base.get_list::<usize>("missing").unwrap(), None);
        let list = FlatConfig::parse("l = 1, 2,3\n").unwrap();
        assert_eq!(list.get_list::<usize>("l").unwrap(), Some(vec![1, 2, 3]));
    }
}
