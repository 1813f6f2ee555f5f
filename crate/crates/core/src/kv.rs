//! Flat `key = value` text used by config files and checkpoint headers.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are an error.
pub(crate) fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_owned();
        if out.insert(key.clone(), value.trim().to_owned()).is_some() {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
    }
    Ok(out)
}

pub(crate) fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.get(key)
        .map(|s| {
            s.parse()
                .map_err(|e| Error::Config(format!("`{key}` = `{s}`: {e}")))
        })
        .transpose()
}

pub(crate) fn require<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    get(map, key)?.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| Error::Config(format!("list entry `{p}`: {e}")))
        })
        .collect()
}

pub(crate) fn format_list(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}
