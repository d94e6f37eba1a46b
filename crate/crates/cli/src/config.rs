//! `key=value` config files layered under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use archshape::files::read_text;
use archshape::{Error, Result};

/// Values from an optional config file; flags win over these, these win over defaults.
#[derive(Debug, Default)]
pub struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    /// Reads `path` if given. Keys must be in `allowed`; `#` starts a comment.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Layered::default());
        };
        Self::parse(&read_text(path)?, allowed, &path.display().to_string())
    }

    pub fn parse(text: &str, allowed: &[&str], origin: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Config(format!("{origin} line {}: {m}", n + 1));
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected key=value, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !allowed.contains(&key) {
                return Err(err(format!("unknown key `{key}` (allowed: {})", allowed.join(", "))));
            }
            if file.insert(key.to_string(), value.to_string()).is_some() {
                return Err(err(format!("key `{key}` given twice")));
            }
        }
        Ok(Layered { file })
    }

    fn from_file<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|v| v.parse().map_err(|e| Error::Config(format!("bad value `{v}` for `{key}`: {e}"))))
            .transpose()
    }

    pub fn optional<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.from_file(key),
        }
    }

    pub fn or<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.optional(key, flag)?.unwrap_or(default))
    }

    pub fn required<T>(&self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| Error::Argument(format!("missing required `--{key}` (flag or config key)")))
    }

    /// Repeatable flag; the file form is a comma-separated list.
    pub fn list<T>(&self, key: &str, flag: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if !flag.is_empty() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| Error::Config(format!("bad value `{s}` for `{key}`: {e}"))))
                .collect(),
        }
    }

    /// Switch flag: present means true, otherwise the file decides.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.from_file(key)?.unwrap_or(false))
    }
}
