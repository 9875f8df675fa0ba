// SPDX-License-Identifier: Apache-2.0

//! Shared helpers for the integration tests: run a config in a scratch
//! directory and compare its artifacts with the in-memory oracle.

#![allow(dead_code)]

use std::path::Path;

use emrmat::cluster::run_cluster;
use emrmat::csr::CsrGraph;
use emrmat::emstore::read_edge_file;
use emrmat::layout::Layout;
use emrmat::metrics::Metrics;
use emrmat::pipeline::{run_pipeline, RunReport};
use emrmat::shuffle::distributed_shuffle;
use emrmat::types::decode_ids;
use emrmat::validate::{oracle_generate, OracleGraph};
use emrmat::{ClusterConfig, Edge};

pub struct Run {
    pub report: RunReport,
    pub dir: tempfile::TempDir,
}

impl Run {
    pub fn layout(&self) -> Layout {
        Layout::new(self.dir.path())
    }

    pub fn checksums(&self) -> Vec<(String, String)> {
        self.report.manifest.checksums()
    }

    pub fn checksum(&self, key: &str) -> String {
        self.report
            .manifest
            .get(&format!("checksum.{key}"))
            .unwrap_or_else(|| panic!("manifest lacks checksum.{key}"))
            .to_string()
    }
}

pub fn config(scale: u32, nodes: usize, cores: usize, seed: u64) -> ClusterConfig {
    ClusterConfig {
        scale,
        nodes,
        cores,
        seed,
        watchdog_secs: 30,
        ..Default::default()
    }
}

pub fn run(cfg: &ClusterConfig) -> Run {
    let dir = tempfile::tempdir().expect("scratch dir");
    let cfg = ClusterConfig {
        workdir: dir.path().to_path_buf(),
        ..cfg.clone()
    };
    let report = run_pipeline(&cfg).unwrap_or_else(|e| panic!("run {cfg:?} failed: {e}"));
    Run { report, dir }
}

/// Runs only the shuffle and returns the gathered permutation.
pub fn shuffle_only(cfg: &ClusterConfig) -> Vec<u64> {
    run_cluster(cfg, Metrics::new(), distributed_shuffle)
        .expect("shuffle")
        .concat()
}

pub fn sorted(mut v: Vec<Edge>) -> Vec<Edge> {
    v.sort_unstable();
    v
}

pub fn gathered_perm(cfg: &ClusterConfig, root: &Path) -> Vec<u64> {
    let layout = Layout::new(root);
    (0..cfg.nodes)
        .flat_map(|i| decode_ids(&std::fs::read(layout.perm(i)).unwrap()))
        .collect()
}

pub fn relabeled_edges(cfg: &ClusterConfig, root: &Path) -> Vec<Edge> {
    let layout = Layout::new(root);
    let mut out = Vec::new();
    for i in 0..cfg.nodes {
        for c in 0..cfg.cores {
            out.extend(read_edge_file(&layout.relabeled(i, c)).unwrap());
        }
    }
    out
}

pub fn owned_edges(root: &Path, node: usize) -> Vec<Edge> {
    read_edge_file(&Layout::new(root).owned(node)).unwrap()
}

pub fn node_csr(root: &Path, node: usize) -> CsrGraph {
    CsrGraph::read(&Layout::new(root).csr(node)).unwrap()
}

/// Conservation and ownership: every node's owned edges have sources in
/// its range and the counts add up to the configured edge total.
pub fn check_conservation(cfg: &ClusterConfig, root: &Path) -> Result<(), String> {
    let mut total = 0u64;
    for i in 0..cfg.nodes {
        let edges = owned_edges(root, i);
        let lo = i as u64 * cfg.bucket();
        if let Some(e) = edges.iter().find(|e| e.src < lo || e.src >= lo + cfg.bucket()) {
            return Err(format!("node {i} owns {e} outside [{lo}, {})", lo + cfg.bucket()));
        }
        total += edges.len() as u64;
    }
    if total != cfg.total_edges() {
        return Err(format!("{total} edges owned, {} expected", cfg.total_edges()));
    }
    Ok(())
}

/// Compares every artifact of a finished run with the oracle; returns the
/// first disagreement.
pub fn check_against_oracle(cfg: &ClusterConfig, root: &Path, oracle: &OracleGraph) -> Result<(), String> {
    if gathered_perm(cfg, root) != oracle.pv {
        return Err("gathered permutation differs".into());
    }
    if sorted(relabeled_edges(cfg, root)) != sorted(oracle.relabeled.clone()) {
        return Err("relabeled edge multiset differs".into());
    }
    for i in 0..cfg.nodes {
        if sorted(owned_edges(root, i)) != sorted(oracle.owned(i)) {
            return Err(format!("node {i} owned multiset differs"));
        }
        if node_csr(root, i).canonical() != oracle.node_csr(i).canonical() {
            return Err(format!("node {i} canonical CSR differs"));
        }
    }
    Ok(())
}

pub fn oracle(cfg: &ClusterConfig) -> OracleGraph {
    oracle_generate(cfg).expect("oracle")
}

/// Parses the committed golden trace into `(key, value)` pairs.
pub fn golden_trace() -> Vec<(String, String)> {
    include_str!("../golden/scale3.trace")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

pub fn golden_config() -> ClusterConfig {
    ClusterConfig {
        scale: 3,
        edge_factor: 1,
        nodes: 1,
        cores: 1,
        seed: 1,
        ..Default::default()
    }
}

/// Compares a run of [`golden_config`] with the golden file bytes.
pub fn check_golden(root: &Path) -> Result<usize, String> {
    let mut compared = 0;
    for (key, hex) in golden_trace() {
        let Some(rel) = key.strip_prefix("file.") else {
            continue;
        };
        let bytes = std::fs::read(root.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        let have: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        if have != hex {
            return Err(format!("{rel} differs from the golden bytes"));
        }
        compared += 1;
    }
    Ok(compared)
}
