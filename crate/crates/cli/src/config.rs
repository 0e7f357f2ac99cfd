use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nsnewton::Vector;

/// `key = value` lines mirroring the long flag names; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        text.parse()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key '{key}': {e}"))
            })
            .transpose()
    }

    /// `flag` if given, else the config value.
    pub fn merge<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

impl FromStr for ConfigFile {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected key = value", no + 1);
            };
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            entries.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }
}

/// Comma-separated reals.
pub fn parse_vector(s: &str) -> Result<Vector> {
    let vals = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("'{p}': {e}")))
        .collect::<Result<Vec<f64>>>()?;
    if vals.is_empty() || vals.iter().any(|v| !v.is_finite()) {
        bail!("expected finite comma-separated reals, got '{s}'");
    }
    Ok(Vector::from_vec(vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges() {
        let cfg: ConfigFile = "# run\nproblem = abs1d\nmax_iter=7\n--tol = 1e-9 # tight\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.raw("problem"), Some("abs1d"));
        assert_eq!(cfg.get::<usize>("max-iter").unwrap(), Some(7));
        assert_eq!(cfg.merge(Some(3usize), "max-iter").unwrap(), Some(3));
        assert_eq!(cfg.merge::<f64>(None, "tol").unwrap(), Some(1e-9));
        assert!(cfg.get::<usize>("problem").is_err());
        assert!("no equals sign".parse::<ConfigFile>().is_err());
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("1, -2.5").unwrap().as_slice(), &[1.0, -2.5]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("nan").is_err());
    }
}
