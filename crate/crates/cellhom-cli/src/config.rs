//! Line-oriented `key = value` config files with a strict schema.
//!
//! `#` starts a comment, blank lines are skipped, duplicate or unknown keys
//! are rejected with their line number. Values are echoed verbatim into the
//! JSON summary for provenance.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};

/// Parsed file: key -> (value, line number).
#[derive(Debug, Default, Clone)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got `{raw}`", lineno + 1);
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if let Some((_, first)) = entries.get(&key) {
                bail!(
                    "line {}: duplicate key `{key}` (first set on line {first})",
                    lineno + 1
                );
            }
            entries.insert(key, (value, lineno + 1));
        }
        Ok(ConfigMap { entries })
    }

    /// Rejects keys outside the allowed set, naming the offending line.
    pub fn check_schema(&self, allowed: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                bail!("line {line}: unknown key `{key}`");
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Inserts or overrides a value (command-line flags win over the file).
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect()
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("key `{key}`: {e}")),
        }
    }

    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|e| anyhow!("key `{key}`: `{s}`: {e}"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Parses one matrix literal: rows separated by `;`, entries by `,`.
pub fn parse_matrix(spec: &str) -> Result<cellhom::Matrix> {
    let rows: Vec<Vec<f64>> = spec
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|e| {
                    e.trim()
                        .parse::<f64>()
                        .map_err(|err| anyhow!("matrix entry `{e}`: {err}"))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let m = rows.len();
    if m == 0 || rows[0].is_empty() {
        bail!("empty matrix literal `{spec}`");
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        bail!("ragged matrix literal `{spec}`");
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        bail!("non-finite matrix entry in `{spec}`");
    }
    Ok(cellhom::Matrix::from_row_slice(m, d, &flat))
}

/// Parses a `|`-separated list of matrix literals.
pub fn parse_matrix_list(spec: &str) -> Result<Vec<cellhom::Matrix>> {
    spec.split('|').map(|s| parse_matrix(s.trim())).collect()
}
