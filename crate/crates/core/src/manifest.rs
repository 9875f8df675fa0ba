// SPDX-License-Identifier: Apache-2.0

//! Run manifest: an ordered `key=value` text file, written atomically.
//!
//! Keys are grouped by prefix: `config.*` holds the resolved config,
//! `rng.*` the generator, `time.*`, `io.*` and `mem.*` the measurements,
//! `owned.*` the per-node edge counts and `checksum.*` sha256 digests of
//! the outputs. Two runs are reproductions of each other iff their
//! `checksum.*` entries agree.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{ClusterConfig, CONFIG_KEYS};
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    /// Sets `key`, replacing an existing value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, v.as_str()))
        })
    }

    /// The `checksum.*` entries, which identify a run's outputs.
    pub fn checksums(&self) -> Vec<(String, String)> {
        self.with_prefix("checksum")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    pub fn record_config(&mut self, cfg: &ClusterConfig) {
        for key in CONFIG_KEYS {
            if let Some(v) = cfg.get(key) {
                self.set(format!("config.{key}"), v);
            }
        }
    }

    /// Rebuilds the config recorded under `config.*`.
    pub fn config(&self) -> Result<ClusterConfig> {
        let mut cfg = ClusterConfig::default();
        for (k, v) in self.with_prefix("config") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Corrupt(format!("manifest line {}: missing `=`", i + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).at(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    std::fs::write(&tmp, bytes).at(&tmp)?;
    std::fs::rename(&tmp, path).at(path)
}

/// Incremental sha256 over several byte sources, as lowercase hex.
#[derive(Clone, Default)]
pub struct Checksum(Sha256);

impl Checksum {
    pub fn new() -> Self {
        Checksum::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub fn update_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).at(path)?;
        self.0.update(&bytes);
        Ok(())
    }

    pub fn hex(self) -> String {
        hex::encode(self.0.finalize())
    }
}
