//! `key = value` config files and flag/config/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(UsageError(format!("config line {}: expected key = value", i + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

/// Resolves each setting as flag, then config entry, then default, and
/// records the result for the manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    config: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config: BTreeMap<String, String>) -> Self {
        Self { config, resolved: BTreeMap::new() }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> Result<T, UsageError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_config = self.config.remove(key);
        let value = match (flag, from_config, default) {
            (Some(v), _, _) => v,
            (None, Some(s), _) => s.parse().map_err(|e| UsageError(format!("config key {key}: {e}")))?,
            (None, None, Some(d)) => d,
            (None, None, None) => return Err(UsageError(format!("missing required setting --{key}"))),
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Fails on config keys that no setting consumed.
    pub fn finish(&self) -> Result<(), UsageError> {
        if let Some(k) = self.config.keys().next() {
            return Err(UsageError(format!("unknown config key {k}")));
        }
        Ok(())
    }
}

/// Comma-separated list.
pub fn parse_list<T>(s: &str) -> Result<Vec<T>, UsageError>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| UsageError(format!("bad list entry {p:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let cfg = parse_config("# comment\nn = 20\nr=2 # trailing\nseed_value = 3\n").unwrap();
        let mut res = Resolver::new(cfg);
        assert_eq!(res.get::<usize>("n", Some(5), None).unwrap(), 5);
        assert_eq!(res.get::<f64>("r", None, Some(1.0)).unwrap(), 2.0);
        assert_eq!(res.get::<u64>("k", None, Some(7)).unwrap(), 7);
        assert!(res.get::<usize>("missing", None, None).is_err());
        assert!(res.finish().is_err());
        assert_eq!(res.get::<u64>("seed-value", None, None).unwrap(), 3);
        assert!(res.finish().is_ok());
    }

    #[test]
    fn bad_lines() {
        assert!(parse_config("just words").is_err());
        assert!(parse_list::<usize>("1,x").is_err());
        assert_eq!(parse_list::<f64>("0.1, 1").unwrap(), vec![0.1, 1.0]);
    }
}
