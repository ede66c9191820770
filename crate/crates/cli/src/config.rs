//! `key = value` config files and flag resolution.
//!
//! Keys are the long flag names without dashes (`iters`, `burnin`,
//! `missing-token`, ...). A flag given on the command line wins over the
//! file, the file wins over the built-in default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    k + 1
                ))
            })?;
            entries.insert(key.trim().replace('_', "-"), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text)
            }
        }
    }

    /// Resolves one setting.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.entries.get(key) {
            Some(raw) => raw.parse().map_err(|e| {
                CliError::Usage(format!("config key {key}: cannot parse {raw:?}: {e}"))
            }),
            None => Ok(default),
        }
    }

    /// Like [`pick`](Self::pick) without a default.
    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|raw| {
                raw.parse().map_err(|e| {
                    CliError::Usage(format!("config key {key}: cannot parse {raw:?}: {e}"))
                })
            })
            .transpose()
    }

    /// Comma-separated list setting.
    pub fn pick_list<T>(
        &self,
        flag: Option<Vec<T>>,
        key: &str,
        default: Vec<T>,
    ) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick_list_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_list_opt<T>(
        &self,
        flag: Option<Vec<T>>,
        key: &str,
    ) -> Result<Option<Vec<T>>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.entries
            .get(key)
            .map(|raw| {
                parse_list(raw).map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }
}

pub fn parse_list<T>(raw: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| format!("cannot parse {s:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let c =
            ConfigFile::parse("iters = 50\n# comment\nburn_in=10 # trailing\nrates = 0.1, 0.3\n")
                .unwrap();
        assert_eq!(c.pick(None, "iters", 200usize).unwrap(), 50);
        assert_eq!(c.pick(Some(7usize), "iters", 200).unwrap(), 7);
        assert_eq!(c.pick(None, "thin", 2usize).unwrap(), 2);
        assert_eq!(c.pick(None, "burn-in", 0usize).unwrap(), 10);
        assert_eq!(
            c.pick_list(None, "rates", vec![0.5f64]).unwrap(),
            vec![0.1, 0.3]
        );
    }

    #[test]
    fn bad_lines_are_usage_errors() {
        assert!(matches!(
            ConfigFile::parse("just words"),
            Err(CliError::Usage(_))
        ));
        let c = ConfigFile::parse("iters = many").unwrap();
        assert!(matches!(
            c.pick(None, "iters", 1usize),
            Err(CliError::Usage(_))
        ));
    }
}
