// SPDX-License-Identifier: Apache-2.0

//! Cluster and generator configuration.
//!
//! Configuration files are plain `key = value` lines; `#` starts a comment.
//! The same keys are accepted as command-line overrides. Derived constants
//! (bucket size `B`, bin size `b`, chunk sizes) are always computed.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{EDGE_BYTES, ID_BYTES};

/// R-MAT quadrant probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmatParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RmatParams {
    /// Graph500 reference parameters.
    pub const GRAPH500: RmatParams = RmatParams {
        a: 0.57,
        b: 0.19,
        c: 0.19,
        d: 0.05,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let p = RmatParams { a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.d];
        if all.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Config(format!(
                "R-MAT probabilities must lie in [0,1], got {self}"
            )));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "R-MAT probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for RmatParams {
    fn default() -> Self {
        RmatParams::GRAPH500
    }
}

impl fmt::Display for RmatParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.a, self.b, self.c, self.d)
    }
}

impl FromStr for RmatParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad R-MAT parameters `{s}`: {e}")))?;
        match parts.as_slice() {
            [a, b, c, d] => RmatParams::new(*a, *b, *c, *d),
            _ => Err(Error::Config(format!(
                "R-MAT parameters need four values a,b,c,d, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CsrVariant {
    Hash,
    #[default]
    Sorted,
}

impl fmt::Display for CsrVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsrVariant::Hash => "hash",
            CsrVariant::Sorted => "sorted",
        })
    }
}

impl FromStr for CsrVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash" => Ok(CsrVariant::Hash),
            "sorted" => Ok(CsrVariant::Sorted),
            other => Err(Error::Config(format!("unknown CSR variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RedistributeMode {
    Unordered,
    #[default]
    Sorted,
}

impl fmt::Display for RedistributeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RedistributeMode::Unordered => "unordered",
            RedistributeMode::Sorted => "sorted",
        })
    }
}

impl FromStr for RedistributeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unordered" => Ok(RedistributeMode::Unordered),
            "sorted" => Ok(RedistributeMode::Sorted),
            other => Err(Error::Config(format!(
                "unknown redistribute mode `{other}`"
            ))),
        }
    }
}

/// Everything a run needs. `n = 2^scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub scale: u32,
    /// Edges per vertex (`f`).
    pub edge_factor: u64,
    /// Compute nodes (`nb`).
    pub nodes: usize,
    /// Cores per node (`nc`).
    pub cores: usize,
    /// Edges per disk block (`C_e`).
    pub block_edges: usize,
    /// Working memory per core in bytes (`mmc`).
    pub mem_per_core: usize,
    /// Bytes per redistribution packet (`mblk`).
    pub packet_bytes: usize,
    pub seed: u64,
    pub rmat: RmatParams,
    pub workdir: PathBuf,
    pub csr_variant: CsrVariant,
    pub redistribute: RedistributeMode,
    /// Upper bound of the random per-message delivery delay; 0 disables.
    pub jitter_ms: u64,
    pub emit_both_orientations: bool,
    /// Base watchdog timeout; scaled up with problem size.
    pub watchdog_secs: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            scale: 10,
            edge_factor: 16,
            nodes: 1,
            cores: 1,
            block_edges: 4096,
            mem_per_core: 16 << 20,
            packet_bytes: 64 << 10,
            seed: 1,
            rmat: RmatParams::GRAPH500,
            workdir: PathBuf::from("emrmat-work"),
            csr_variant: CsrVariant::Sorted,
            redistribute: RedistributeMode::Sorted,
            jitter_ms: 0,
            emit_both_orientations: false,
            watchdog_secs: 60,
        }
    }
}

/// Keys accepted by [`ClusterConfig::set`], in canonical output order.
pub const CONFIG_KEYS: &[&str] = &[
    "scale",
    "edge-factor",
    "nodes",
    "cores",
    "block-edges",
    "mem-per-core",
    "packet-bytes",
    "seed",
    "rmat",
    "workdir",
    "csr-variant",
    "redistribute",
    "jitter",
    "emit-both-orientations",
    "watchdog-secs",
];

impl ClusterConfig {
    /// Number of vertices `n`.
    pub fn n(&self) -> u64 {
        1u64 << self.scale
    }

    /// Vertices per node, `B = n / nb`.
    pub fn bucket(&self) -> u64 {
        self.n() / self.nodes as u64
    }

    /// Vertices per core, `b = B / nc`.
    pub fn bin(&self) -> u64 {
        self.bucket() / self.cores as u64
    }

    /// Edges generated per vertex, counting the reverse copy when enabled.
    pub fn stored_edge_factor(&self) -> u64 {
        if self.emit_both_orientations {
            2 * self.edge_factor
        } else {
            self.edge_factor
        }
    }

    /// Edges each core generates (`b * f`, doubled with both orientations).
    pub fn edges_per_core(&self) -> u64 {
        self.bin() * self.stored_edge_factor()
    }

    pub fn total_edges(&self) -> u64 {
        self.n() * self.stored_edge_factor()
    }

    pub fn block_bytes(&self) -> usize {
        self.block_edges * EDGE_BYTES
    }

    /// Edges per in-memory chunk: as many whole blocks as fit in `mmc`.
    pub fn chunk_edges(&self) -> u64 {
        let per_mem = (self.mem_per_core / EDGE_BYTES) as u64;
        let blocks = (per_mem / self.block_edges as u64).max(1);
        blocks * self.block_edges as u64
    }

    pub fn packet_edges(&self) -> usize {
        self.packet_bytes / EDGE_BYTES
    }

    /// Watchdog timeout, grown linearly with edges per node above 2^20.
    pub fn watchdog(&self) -> std::time::Duration {
        let per_node = self.total_edges() / self.nodes as u64;
        let factor = (per_node >> 20).max(1);
        std::time::Duration::from_secs(self.watchdog_secs.saturating_mul(factor))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.scale == 0 || self.scale > 40 {
            return fail(format!("scale must be in [1, 40], got {}", self.scale));
        }
        if self.edge_factor == 0 {
            return fail("edge factor must be positive".into());
        }
        for (name, v) in [("nodes", self.nodes), ("cores", self.cores)] {
            if v == 0 || !v.is_power_of_two() {
                return fail(format!("{name} must be a power of two, got {v}"));
            }
        }
        let n = self.n();
        if (self.nodes as u64).saturating_mul(self.cores as u64) > n {
            return fail(format!(
                "nodes * cores = {} exceeds n = {n}",
                self.nodes * self.cores
            ));
        }
        // shuffle exchanges nb sub-blocks of B / nb identifiers each
        if (self.nodes as u64).saturating_mul(self.nodes as u64) > n {
            return fail(format!(
                "nodes^2 = {} exceeds n = {n}; the shuffle needs nodes | B",
                self.nodes * self.nodes
            ));
        }
        if self.block_edges == 0 {
            return fail("block-edges must be positive".into());
        }
        if self.mem_per_core < self.block_bytes() {
            return fail(format!(
                "mem-per-core {} is smaller than one block ({} bytes)",
                self.mem_per_core,
                self.block_bytes()
            ));
        }
        if self.packet_bytes < EDGE_BYTES || !self.packet_bytes.is_multiple_of(EDGE_BYTES) {
            return fail(format!(
                "packet-bytes must be a positive multiple of {EDGE_BYTES}, got {}",
                self.packet_bytes
            ));
        }
        // the relabel sweep keeps one block of every chunk resident
        let chunks = self.edges_per_core().div_ceil(self.chunk_edges());
        let sweep_bytes = chunks.saturating_mul(self.block_bytes() as u64);
        if sweep_bytes > self.mem_per_core as u64 {
            return fail(format!(
                "each core's edge list spans {chunks} chunks whose sweep blocks need {sweep_bytes} bytes, \
                 more than mem-per-core {}; raise mem-per-core or lower block-edges",
                self.mem_per_core
            ));
        }
        let perm_bytes = self.bucket().saturating_mul(ID_BYTES as u64);
        let node_mem = (self.cores as u64).saturating_mul(self.mem_per_core as u64);
        if perm_bytes > node_mem {
            return fail(format!(
                "a permutation range of {perm_bytes} bytes does not fit in node memory ({node_mem} bytes)"
            ));
        }
        if self.csr_variant == CsrVariant::Sorted && self.redistribute != RedistributeMode::Sorted {
            return fail("the sorted CSR builder needs --redistribute sorted".into());
        }
        if self.watchdog_secs == 0 {
            return fail("watchdog-secs must be positive".into());
        }
        self.rmat.validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |e: &dyn fmt::Display| Error::Config(format!("bad value `{value}` for {key}: {e}"));
        match key.trim() {
            "scale" => self.scale = value.parse().map_err(|e| bad(&e))?,
            "edge-factor" => self.edge_factor = value.parse().map_err(|e| bad(&e))?,
            "nodes" => self.nodes = value.parse().map_err(|e| bad(&e))?,
            "cores" => self.cores = value.parse().map_err(|e| bad(&e))?,
            "block-edges" => self.block_edges = value.parse().map_err(|e| bad(&e))?,
            "mem-per-core" => self.mem_per_core = parse_bytes(value).map_err(|e| bad(&e))?,
            "packet-bytes" => self.packet_bytes = parse_bytes(value).map_err(|e| bad(&e))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "rmat" => self.rmat = value.parse()?,
            "workdir" => self.workdir = PathBuf::from(value),
            "csr-variant" => self.csr_variant = value.parse()?,
            "redistribute" => self.redistribute = value.parse()?,
            "jitter" => self.jitter_ms = value.parse().map_err(|e| bad(&e))?,
            "emit-both-orientations" => {
                self.emit_both_orientations = parse_bool(value).map_err(|e| bad(&e))?
            }
            "watchdog-secs" => self.watchdog_secs = value.parse().map_err(|e| bad(&e))?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "scale" => self.scale.to_string(),
            "edge-factor" => self.edge_factor.to_string(),
            "nodes" => self.nodes.to_string(),
            "cores" => self.cores.to_string(),
            "block-edges" => self.block_edges.to_string(),
            "mem-per-core" => self.mem_per_core.to_string(),
            "packet-bytes" => self.packet_bytes.to_string(),
            "seed" => self.seed.to_string(),
            "rmat" => self.rmat.to_string(),
            "workdir" => self.workdir.display().to_string(),
            "csr-variant" => self.csr_variant.to_string(),
            "redistribute" => self.redistribute.to_string(),
            "jitter" => self.jitter_ms.to_string(),
            "emit-both-orientations" => self.emit_both_orientations.to_string(),
            "watchdog-secs" => self.watchdog_secs.to_string(),
            _ => return None,
        })
    }

    /// Parses a config file body on top of the defaults. Does not validate.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = ClusterConfig::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).unwrap());
            out.push('\n');
        }
        out
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err("expected a boolean".into()),
    }
}

/// Parses `4096`, `64K`, `64KiB`, `1M`, `1MiB`, `2G`.
pub fn parse_bytes(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let base: usize = digits.parse().map_err(|e| format!("{e}"))?;
    let mult: usize = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" | "kb" => 1 << 10,
        "m" | "mib" | "mb" => 1 << 20,
        "g" | "gib" | "gb" => 1 << 30,
        other => return Err(format!("unknown size unit `{other}`")),
    };
    base.checked_mul(mult).ok_or_else(|| "size overflows".to_string())
}
