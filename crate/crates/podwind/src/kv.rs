//! Plain-text `key = value` files.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Keys are unique and keep their file order.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut kv = KeyValues::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected key = value", n + 1));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            if kv.get(key).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", n + 1));
            }
            kv.pairs.push((key.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    /// Reads a file; syntax errors are configuration errors.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> std::result::Result<&str, String> {
        self.get(key).ok_or_else(|| format!("missing key '{key}'"))
    }

    /// Parses a required value.
    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<T, String> {
        let v = self.require(key)?;
        v.parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
    }

    /// Parses a comma-separated list of values.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<Vec<T>, String> {
        split_list(self.require(key)?)
            .map(|v| v.parse().map_err(|_| format!("{key}: cannot parse '{v}'")))
            .collect()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.pairs.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((key, value)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Items of a comma-separated list, trimmed, empty items dropped.
pub fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Joins values with `,`.
pub fn join_list<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comments_and_order() {
        let kv = KeyValues::parse("# c\nb = 2\n\na=1 \n").unwrap();
        assert_eq!(kv.keys().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }

    #[test]
    fn rejects_duplicates_and_bare_lines() {
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("a").is_err());
        assert!(KeyValues::parse(" = 3").is_err());
    }

    #[test]
    fn lists() {
        let kv = KeyValues::parse("x = 1, 2,3,").unwrap();
        assert_eq!(kv.parse_list::<u32>("x").unwrap(), [1, 2, 3]);
        assert!(kv.parse_list::<u32>("y").is_err());
    }
}
