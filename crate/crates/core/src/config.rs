//! Flat `key=value` text configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered `key → value` map. Later assignments of a key replace earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", n + 1),
                message: format!("expected key=value, got `{}`", raw.trim()),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config { key: format!("line {}", n + 1), message: "empty key".into() });
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: Display,
    {
        self.get(key)
            .map(|s| s.parse::<V>().map_err(|e| Error::Config { key: key.into(), message: format!("`{s}`: {e}") }))
            .transpose()
    }

    /// Overwrites `slot` when `key` is present.
    pub fn load<V: FromStr>(&self, key: &str, slot: &mut V) -> Result<()>
    where
        V::Err: Display,
    {
        if let Some(v) = self.parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Copies every `prefix.*` entry of `other` into `self`.
    pub fn merge_prefixed(&mut self, other: &KeyValues, prefix: &str) {
        for (k, v) in &other.map {
            if k.starts_with(prefix) {
                self.map.insert(k.clone(), v.clone());
            }
        }
    }

    /// Fails on the first key that is not listed in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config { key: k.clone(), message: "unknown key".into() }),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("# header\n a = 1 \n\nb=x # trailing\na=2\n").unwrap();
        assert_eq!(kv.get("a"), Some("2"));
        assert_eq!(kv.get("b"), Some("x"));
        assert_eq!(kv.parsed::<u32>("a").unwrap(), Some(2));
        assert!(kv.parsed::<u32>("b").is_err());
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("=3\n").is_err());
        let kv = KeyValues::parse("x=1\ny=2").unwrap();
        assert!(kv.reject_unknown(&["x"]).is_err());
        assert!(kv.reject_unknown(&["x", "y"]).is_ok());
    }
}
