//! Key tables, config files and resolved parameter maps.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pathint_core::Error;

/// One recognised `--key value` parameter of a subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Canonical spelling: lower case, `_` folded to `-`.
pub fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config(text: &str, keys: &[Key], origin: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("{origin}:{}: expected key = value", lineno + 1)))?;
        let k = normalize(k);
        if !keys.iter().any(|key| key.name == k) {
            return Err(Error::Usage(format!("{origin}:{}: unknown key '{k}'", lineno + 1)));
        }
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Usage(format!("{origin}:{}: duplicate key '{k}'", lineno + 1)));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path, keys: &[Key]) -> Result<BTreeMap<String, String>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, keys, &path.display().to_string())
}

/// Supplied values layered over table defaults. Every value a command reads
/// is recorded; supplied keys the command never reads are rejected.
#[derive(Debug)]
pub struct Params {
    keys: Vec<Key>,
    supplied: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Params {
    /// `flags` override `file`.
    pub fn new(keys: Vec<Key>, file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        let mut supplied = file;
        supplied.extend(flags);
        Params { keys, supplied, resolved: BTreeMap::new() }
    }

    fn raw(&mut self, name: &str) -> Option<String> {
        let spec = self.keys.iter().find(|k| k.name == name).unwrap_or_else(|| panic!("key '{name}' missing from table"));
        let v = self.supplied.get(name).cloned().or_else(|| spec.default.map(str::to_string))?;
        self.resolved.insert(name.to_string(), v.clone());
        Some(v)
    }

    fn parse<T: std::str::FromStr>(&mut self, name: &str, what: &str) -> Result<Option<T>, Error> {
        match self.raw(name) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("--{name}: expected {what}, got '{v}'"))),
        }
    }

    fn required<T>(name: &str, v: Option<T>) -> Result<T, Error> {
        v.ok_or_else(|| Error::Usage(format!("missing required key --{name}")))
    }

    pub fn opt_f64(&mut self, name: &str) -> Result<Option<f64>, Error> {
        self.parse(name, "a number")
    }

    pub fn f64(&mut self, name: &str) -> Result<f64, Error> {
        let v = self.opt_f64(name)?;
        Self::required(name, v)
    }

    pub fn opt_usize(&mut self, name: &str) -> Result<Option<usize>, Error> {
        self.parse(name, "a non-negative integer")
    }

    pub fn usize(&mut self, name: &str) -> Result<usize, Error> {
        let v = self.opt_usize(name)?;
        Self::required(name, v)
    }

    pub fn u64(&mut self, name: &str) -> Result<u64, Error> {
        let v = self.parse(name, "a non-negative integer")?;
        Self::required(name, v)
    }

    pub fn i64(&mut self, name: &str) -> Result<i64, Error> {
        let v = self.parse(name, "an integer")?;
        Self::required(name, v)
    }

    pub fn bool(&mut self, name: &str) -> Result<bool, Error> {
        let v = self.parse(name, "true or false")?;
        Self::required(name, v)
    }

    /// Comma-separated numbers.
    pub fn opt_f64_list(&mut self, name: &str) -> Result<Option<Vec<f64>>, Error> {
        let Some(v) = self.raw(name) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("--{name}: expected comma-separated numbers, got '{v}'")))
            })
            .collect::<Result<_, _>>()
            .map(Some)
    }

    pub fn f64_list(&mut self, name: &str) -> Result<Vec<f64>, Error> {
        let v = self.opt_f64_list(name)?;
        Self::required(name, v)
    }

    /// One of `choices`, returned as its index.
    pub fn choice(&mut self, name: &str, choices: &[&str]) -> Result<usize, Error> {
        let v = Self::required(name, self.raw(name))?;
        choices
            .iter()
            .position(|c| *c == v)
            .ok_or_else(|| Error::Usage(format!("--{name}: expected one of {}, got '{v}'", choices.join("|"))))
    }

    /// Fails on supplied keys that the command did not consume.
    pub fn finish(&self) -> Result<(), Error> {
        let unused: Vec<&str> =
            self.supplied.keys().filter(|k| !self.resolved.contains_key(*k)).map(String::as_str).collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!("key(s) not used by this configuration: {}", unused.join(", "))))
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
