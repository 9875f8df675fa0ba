// SPDX-License-Identifier: Apache-2.0

//! End-to-end driver: shuffle, generate, relabel, redistribute, csr.
//!
//! Phases exchange state only through the working directory and the node's
//! permutation slice, so any suffix of the phase list can be rerun against
//! an existing directory. A run ends with either `manifest.txt` or
//! `error.txt`; the stale one is removed at the start.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::cluster::{run_cluster, NodeCtx};
use crate::config::ClusterConfig;
use crate::csr::{build_csr_node, CsrBuildReport, CsrGraph};
use crate::emstore::ExtEdgeList;
use crate::error::{Error, IoContext, Result};
use crate::layout::Layout;
use crate::manifest::{write_atomic, Checksum, Manifest};
use crate::metrics::Metrics;
use crate::redistribute::redistribute_node;
use crate::relabel::relabel_node;
use crate::rmat::generate_edgelist;
use crate::rng::{RngStream, RNG_ALGORITHM};
use crate::shuffle::{distributed_shuffle, shuffle_rounds};
use crate::types::{decode_ids, encode_ids};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Shuffle,
    Generate,
    Relabel,
    Redistribute,
    Csr,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Shuffle,
        Phase::Generate,
        Phase::Relabel,
        Phase::Redistribute,
        Phase::Csr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Shuffle => "shuffle",
            Phase::Generate => "generate",
            Phase::Relabel => "relabel",
            Phase::Redistribute => "redistribute",
            Phase::Csr => "csr",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown phase `{s}`")))
    }
}

/// Per-node results of one run.
#[derive(Clone, Debug, Default)]
pub struct NodeOutcome {
    pub owned: Option<u64>,
    pub csr: Option<CsrBuildReport>,
}

#[derive(Debug)]
pub struct RunReport {
    pub config: ClusterConfig,
    pub phases: Vec<Phase>,
    pub metrics: Arc<Metrics>,
    pub nodes: Vec<NodeOutcome>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn owned_counts(&self) -> Option<Vec<u64>> {
        self.nodes.iter().map(|n| n.owned).collect()
    }
}

pub fn run_pipeline(cfg: &ClusterConfig) -> Result<RunReport> {
    run_phases(cfg, &Phase::ALL)
}

/// Runs `phases` in order against `cfg.workdir`, writing the manifest on
/// success and a structured `error.txt` on failure.
pub fn run_phases(cfg: &ClusterConfig, phases: &[Phase]) -> Result<RunReport> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.workdir);
    std::fs::create_dir_all(layout.root()).at(layout.root())?;
    for stale in [layout.manifest(), layout.error()] {
        if stale.exists() {
            std::fs::remove_file(&stale).at(&stale)?;
        }
    }
    write_atomic(&layout.config(), cfg.to_kv_string().as_bytes())?;

    let metrics = Metrics::new();
    let result = execute(cfg, phases, &layout, metrics.clone()).and_then(|nodes| {
        let manifest = build_manifest(cfg, phases, &layout, &metrics, &nodes)?;
        manifest.write(&layout.manifest())?;
        Ok(RunReport {
            config: cfg.clone(),
            phases: phases.to_vec(),
            metrics,
            nodes,
            manifest,
        })
    });
    if let Err(e) = &result {
        write_error(&layout, e);
    }
    result
}

fn write_error(layout: &Layout, e: &Error) {
    let mut text = String::new();
    if let Error::Phase { phase, node, .. } = e {
        text.push_str(&format!("phase={phase}\nnode={node}\n"));
    }
    text.push_str(&format!("error={e}\n"));
    // best effort: the original error is what the caller reports
    let _ = write_atomic(&layout.error(), text.as_bytes());
}

fn execute(cfg: &ClusterConfig, phases: &[Phase], layout: &Layout, metrics: Arc<Metrics>) -> Result<Vec<NodeOutcome>> {
    let nodes = run_cluster(cfg, metrics, |node| {
        let mut out = NodeOutcome::default();
        for &phase in phases {
            node.phase(phase.name(), || run_node_phase(node, layout, phase, &mut out))?;
        }
        Ok(out)
    })?;

    if let Some(owned) = nodes.iter().map(|n| n.owned).collect::<Option<Vec<u64>>>() {
        let total: u64 = owned.iter().sum();
        if total != cfg.total_edges() {
            return Err(Error::Corrupt(format!(
                "edge conservation violated: nodes own {total} edges, expected {}",
                cfg.total_edges()
            )));
        }
    }
    Ok(nodes)
}

fn run_node_phase(node: &NodeCtx, layout: &Layout, phase: Phase, out: &mut NodeOutcome) -> Result<()> {
    let cfg = node.cfg();
    let bid = node.bid();
    match phase {
        Phase::Shuffle => {
            let pv = distributed_shuffle(node)?;
            write_atomic(&layout.perm(bid), &encode_ids(&pv))?;
            node.set_perm(Arc::new(pv));
        }
        Phase::Generate => {
            node.run_cores(|core| {
                let tid = core.tid();
                let mut list = ExtEdgeList::create(
                    &layout.generated(bid, tid),
                    cfg.block_edges,
                    cfg.chunk_edges(),
                    core.io_sink("generate"),
                )?;
                let mut rng = RngStream::for_generate(cfg.seed, bid, tid);
                generate_edgelist(
                    &mut list,
                    cfg.bin() * cfg.edge_factor,
                    &mut rng,
                    cfg.scale,
                    &cfg.rmat,
                    cfg.emit_both_orientations,
                )
            })?;
            node.global_barrier()?;
        }
        Phase::Relabel => {
            let perm = match node.perm() {
                Some(p) => p,
                None => {
                    let p = Arc::new(load_perm(layout, bid, cfg.bucket())?);
                    node.set_perm(p.clone());
                    p
                }
            };
            relabel_node(node, layout, &perm)?;
        }
        Phase::Redistribute => {
            out.owned = Some(redistribute_node(node, layout)?);
            node.global_barrier()?;
        }
        Phase::Csr => {
            out.csr = Some(build_csr_node(node, layout)?);
            node.global_barrier()?;
        }
    }
    Ok(())
}

/// Reads a node's permutation slice written by an earlier shuffle.
pub fn load_perm(layout: &Layout, node: usize, bucket: u64) -> Result<Vec<u64>> {
    let path = layout.perm(node);
    if !path.exists() {
        return Err(Error::PhaseOrder(format!(
            "{} is missing; run the shuffle phase first",
            path.display()
        )));
    }
    let ids = decode_ids(&std::fs::read(&path).at(&path)?);
    if ids.len() as u64 != bucket {
        return Err(Error::Corrupt(format!(
            "{} holds {} identifiers, expected {bucket}",
            path.display(),
            ids.len()
        )));
    }
    Ok(ids)
}

/// sha256 digests of the run outputs that exist in `layout`:
/// the gathered permutation, the raw CSR files, and the CSR files with
/// every neighbor slice sorted.
pub fn output_checksums(cfg: &ClusterConfig, layout: &Layout) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let nodes = 0..cfg.nodes;
    if nodes.clone().all(|i| layout.perm(i).exists()) {
        let mut c = Checksum::new();
        for i in nodes.clone() {
            c.update_file(&layout.perm(i))?;
        }
        out.push(("perm".to_string(), c.hex()));
    }
    if nodes.clone().all(|i| layout.owned(i).exists()) {
        let mut c = Checksum::new();
        for i in nodes.clone() {
            let mut edges = crate::emstore::read_edge_file(&layout.owned(i))?;
            edges.sort_unstable();
            let mut bytes = Vec::with_capacity(edges.len() * crate::types::EDGE_BYTES);
            crate::types::encode_edges(&edges, &mut bytes);
            c.update(&bytes);
        }
        out.push(("owned.sorted".to_string(), c.hex()));
    }
    if nodes.clone().all(|i| layout.csr(i).exists()) {
        let mut raw = Checksum::new();
        let mut canonical = Checksum::new();
        for i in nodes {
            let bytes = std::fs::read(layout.csr(i)).at(&layout.csr(i))?;
            raw.update(&bytes);
            canonical.update(&CsrGraph::from_bytes(&bytes)?.canonical().to_bytes());
        }
        out.push(("csr.raw".to_string(), raw.hex()));
        out.push(("csr.canonical".to_string(), canonical.hex()));
    }
    Ok(out)
}

fn build_manifest(
    cfg: &ClusterConfig,
    phases: &[Phase],
    layout: &Layout,
    metrics: &Metrics,
    nodes: &[NodeOutcome],
) -> Result<Manifest> {
    let mut m = Manifest::new();
    m.set("version", crate::VERSION);
    m.record_config(cfg);
    m.set("rng.algorithm", RNG_ALGORITHM);
    m.set("rng.seed", cfg.seed);
    m.set("rng.shuffle_rounds", shuffle_rounds(cfg));
    m.set(
        "phases",
        phases.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
    );
    for (phase, d) in metrics.times() {
        m.set(format!("time.{phase}.secs"), format!("{:.6}", d.as_secs_f64()));
    }
    for (key, stats) in metrics.io_rows() {
        let scope = match (key.node, key.core) {
            (None, _) => String::new(),
            (Some(n), None) => format!(".n{n}"),
            (Some(n), Some(c)) => format!(".n{n}.c{c}"),
        };
        for (name, v) in stats.counters() {
            m.set(format!("io.{}{scope}.{name}", key.phase), v);
        }
    }
    for (key, bytes) in metrics.mem_rows() {
        let core = key.core.map(|c| format!(".c{c}")).unwrap_or_default();
        m.set(format!("mem.{}.{}.n{}{core}.peak_bytes", key.phase, key.label, key.node), bytes);
    }
    if let Some(owned) = nodes.iter().map(|n| n.owned).collect::<Option<Vec<u64>>>() {
        for (i, c) in owned.iter().enumerate() {
            m.set(format!("owned.n{i}"), c);
        }
        m.set("owned.total", owned.iter().sum::<u64>());
    }
    for (i, n) in nodes.iter().enumerate() {
        if let Some(r) = n.csr {
            m.set(format!("csr.n{i}.edges"), r.edges);
            m.set(format!("csr.n{i}.adj_flushes"), r.adj_flushes);
            m.set(format!("csr.n{i}.flushed_vertices"), r.flushed_vertices);
        }
    }
    for (k, v) in output_checksums(cfg, layout)? {
        m.set(format!("checksum.{k}"), v);
    }
    Ok(m)
}
