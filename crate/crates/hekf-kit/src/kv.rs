//! Flat `name = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Loaders consume keys through [`KvFile::take`]; anything left over is an
//! unknown key and rejected by [`KvFile::finish`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvFile {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse_str(path: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path,
                    line: i + 1,
                    reason: format!("expected `name = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse {
                    path,
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    path,
                    line: i + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { path, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(path, &text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Consume a required numeric value.
    pub fn take_f64(&mut self, key: &str) -> Result<f64> {
        let (line, value) = self.entries.remove(key).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            reason: format!("missing key `{key}`"),
        })?;
        value.parse::<f64>().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line,
            reason: format!("`{key}` is not a number: `{value}`"),
        })
    }

    /// Consume an optional numeric value, falling back to `default`.
    pub fn take_f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        if self.contains(key) {
            self.take_f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn take_usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        if !self.contains(key) {
            return Ok(default);
        }
        let v = self.take_f64(key)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: 0,
                reason: format!("`{key}` must be a non-negative integer, got {v}"),
            });
        }
        Ok(v as usize)
    }

    pub fn take_u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        Ok(self.take_usize_or(key, default as usize)? as u64)
    }

    pub fn take_bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        let Some((line, value)) = self.entries.remove(key) else {
            return Ok(default);
        };
        match value.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Parse {
                path: self.path.clone(),
                line,
                reason: format!("`{key}` is not a boolean: `{other}`"),
            }),
        }
    }

    pub fn take_string_or(&mut self, key: &str, default: &str) -> String {
        self.entries
            .remove(key)
            .map(|(_, v)| v)
            .unwrap_or_else(|| default.to_string())
    }

    /// Keys (with a given prefix) still present, in sorted order.
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    /// Reject any keys that were never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Parse {
                path: self.path,
                line,
                reason: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

/// Serialize `(key, value)` pairs back into the flat file format.
pub fn render(header: &str, pairs: &[(String, f64)]) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v:.9e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments_and_comments() {
        let mut kv = KvFile::parse_str(
            "t.cfg",
            "# header\n a = 1.5 # trailing\n\n b = -2e3\n flag = true\n",
        )
        .unwrap();
        assert_eq!(kv.take_f64("a").unwrap(), 1.5);
        assert_eq!(kv.take_f64("b").unwrap(), -2e3);
        assert!(kv.take_bool_or("flag", false).unwrap());
        kv.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut kv = KvFile::parse_str("t.cfg", "a = 1\nbogus = 2\n").unwrap();
        kv.take_f64("a").unwrap();
        let err = kv.finish().unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvFile::parse_str("t.cfg", "no equals sign\n").is_err());
        assert!(KvFile::parse_str("t.cfg", "a = 1\na = 2\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let pairs = vec![("x".to_string(), 1.25), ("y".to_string(), -3.5e-7)];
        let text = render("hdr", &pairs);
        let mut kv = KvFile::parse_str("t.cfg", &text).unwrap();
        assert_eq!(kv.take_f64("x").unwrap(), 1.25);
        assert_eq!(kv.take_f64("y").unwrap(), -3.5e-7);
        kv.finish().unwrap();
    }
}
