// SPDX-License-Identifier: Apache-2.0

//! Per-node CSR construction.
//!
//! File layout of `csr.bin`, all little-endian u64:
//! `magic, version, n, B, base, m_local`, then `offv[0..=B]`, then
//! `adjv[0..m_local]`. Local vertex `v` is global vertex `base + v`.
//!
//! The sorted builder makes one pass over a src-sorted owned list. The hash
//! builder counts degrees in bounded per-core maps, prefix-sums them, then
//! scatters adjacency buffers to reserved slots with positioned writes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use crate::cluster::{CoreCtx, NodeCtx};
use crate::config::CsrVariant;
use crate::emstore::{BlockFile, EdgeStream, ExtEdgeList, MemTracker};
use crate::error::{Error, IoContext, Result};
use crate::layout::Layout;
use crate::partition::chunk_partition;
use crate::types::{decode_ids, encode_ids, ChunkDescriptor, Edge, EdgeField, ID_BYTES};

pub const CSR_MAGIC: u64 = u64::from_le_bytes(*b"EMRMCSR\0");
pub const CSR_VERSION: u64 = 1;
pub const HEADER_WORDS: usize = 6;
pub const HEADER_BYTES: u64 = (HEADER_WORDS * ID_BYTES) as u64;

pub const SORTED_PHASE: &str = "csr.sorted";
pub const DEGV_PHASE: &str = "csr.degv";
pub const EDGEV_PHASE: &str = "csr.edgev";
pub const HEADER_PHASE: &str = "csr.header";

/// Bytes charged per resident map entry (key plus count or list header).
pub const MAP_ENTRY_BYTES: usize = 16;

/// One node's CSR held in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrGraph {
    pub n: u64,
    pub base: u64,
    pub offv: Vec<u64>,
    pub adjv: Vec<u64>,
}

impl CsrGraph {
    pub fn bucket(&self) -> u64 {
        self.offv.len() as u64 - 1
    }

    pub fn edge_count(&self) -> u64 {
        self.adjv.len() as u64
    }

    /// Neighbors of local vertex `v`.
    pub fn neighbors(&self, v: usize) -> &[u64] {
        &self.adjv[self.offv[v] as usize..self.offv[v + 1] as usize]
    }

    pub fn degrees(&self) -> Vec<u64> {
        self.offv.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Sorts every neighbor slice, making builds comparable regardless of
    /// per-vertex order.
    pub fn canonicalize(&mut self) {
        for v in 0..self.offv.len() - 1 {
            let (lo, hi) = (self.offv[v] as usize, self.offv[v + 1] as usize);
            self.adjv[lo..hi].sort_unstable();
        }
    }

    pub fn canonical(&self) -> CsrGraph {
        let mut c = self.clone();
        c.canonicalize();
        c
    }

    /// Edges in CSR order, with global source ids.
    pub fn edges(&self) -> Vec<Edge> {
        (0..self.offv.len() - 1)
            .flat_map(|v| self.neighbors(v).iter().map(move |&d| Edge::new(self.base + v as u64, d)))
            .collect()
    }

    pub fn header(&self) -> [u64; HEADER_WORDS] {
        [CSR_MAGIC, CSR_VERSION, self.n, self.bucket(), self.base, self.edge_count()]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut words = Vec::with_capacity(HEADER_WORDS + self.offv.len() + self.adjv.len());
        words.extend_from_slice(&self.header());
        words.extend_from_slice(&self.offv);
        words.extend_from_slice(&self.adjv);
        encode_ids(&words)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Err(Error::Corrupt(format!("csr file: {msg}")));
        if !bytes.len().is_multiple_of(ID_BYTES) || bytes.len() < HEADER_BYTES as usize {
            return bad(format!("{} bytes is not a valid length", bytes.len()));
        }
        let words = decode_ids(bytes);
        let [magic, version, n, bucket, base, m] = words[..HEADER_WORDS] else {
            unreachable!()
        };
        if magic != CSR_MAGIC {
            return bad(format!("bad magic {magic:#x}"));
        }
        if version != CSR_VERSION {
            return bad(format!("unsupported version {version}"));
        }
        let expect = HEADER_WORDS as u64 + bucket + 1 + m;
        if words.len() as u64 != expect {
            return bad(format!("{} words, header implies {expect}", words.len()));
        }
        let split = HEADER_WORDS + bucket as usize + 1;
        Ok(CsrGraph {
            n,
            base,
            offv: words[HEADER_WORDS..split].to_vec(),
            adjv: words[split..].to_vec(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).at(path)?)
    }
}

/// `offv[0] = 0`, `offv[i] = offv[i-1] + degv[i-1]`.
pub fn build_offv(degv: &[u64]) -> Vec<u64> {
    let mut offv = Vec::with_capacity(degv.len() + 1);
    offv.push(0);
    let mut acc = 0;
    for d in degv {
        acc += d;
        offv.push(acc);
    }
    offv
}

/// One pass over a src-sorted edge sequence. Destinations go to `emit` in
/// input order; returns `offv`. Zero-degree gaps are filled one source at a
/// time and trailing entries are padded with the edge count.
pub fn csr_from_sorted(
    edges: impl IntoIterator<Item = Result<Edge>>,
    base: u64,
    bucket: u64,
    mut emit: impl FnMut(u64) -> Result<()>,
) -> Result<Vec<u64>> {
    let mut offv = vec![0u64; bucket as usize + 1];
    let mut csrc = 0u64;
    let mut idx = 0u64;
    for e in edges {
        let e = e?;
        if e.src < base || e.src - base >= bucket {
            return Err(Error::Corrupt(format!(
                "edge {e} outside local range [{base}, {})",
                base + bucket
            )));
        }
        let local = e.src - base;
        if local < csrc {
            return Err(Error::Unsorted {
                field: EdgeField::Src,
                input: 0,
                previous: base + csrc,
                value: e.src,
            });
        }
        while csrc < local {
            csrc += 1;
            offv[csrc as usize] = idx;
        }
        emit(e.des)?;
        idx += 1;
    }
    for slot in offv.iter_mut().skip(csrc as usize + 1) {
        *slot = idx;
    }
    Ok(offv)
}

fn adjv_offset(bucket: u64) -> u64 {
    HEADER_BYTES + (bucket + 1) * ID_BYTES as u64
}

fn header_and_offv(n: u64, base: u64, offv: &[u64]) -> Vec<u8> {
    let bucket = offv.len() as u64 - 1;
    let m = *offv.last().unwrap();
    let mut words = vec![CSR_MAGIC, CSR_VERSION, n, bucket, base, m];
    words.extend_from_slice(offv);
    encode_ids(&words)
}

fn open_owned(node: &NodeCtx, layout: &Layout, sink: crate::emstore::IoSink) -> Result<ExtEdgeList> {
    let cfg = node.cfg();
    ExtEdgeList::open(&layout.owned(node.bid()), cfg.block_edges, cfg.chunk_edges(), sink)
}

/// Builds `csr.bin` with the configured variant.
pub fn build_csr_node(node: &NodeCtx, layout: &Layout) -> Result<CsrBuildReport> {
    match node.cfg().csr_variant {
        CsrVariant::Sorted => build_csr_sorted(node, layout),
        CsrVariant::Hash => build_csr_hash(node, layout),
    }
}

/// Counters of one node's CSR build.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsrBuildReport {
    pub edges: u64,
    /// Adjacency-map flushes across all cores (hash variant).
    pub adj_flushes: u64,
    /// Vertex buffers written across all flushes (hash variant).
    pub flushed_vertices: u64,
}

/// Streams adjv behind a placeholder for header and offv, then writes those
/// through a second handle at offset 0. Every access is sequential.
pub fn build_csr_sorted(node: &NodeCtx, layout: &Layout) -> Result<CsrBuildReport> {
    let cfg = node.cfg();
    let bid = node.bid();
    let bucket = cfg.bucket();
    let base = bid as u64 * bucket;
    let sink = node.io_sink(SORTED_PHASE);
    let path = layout.csr(bid);
    let block_bytes = cfg.block_bytes();

    let mut owned = open_owned(node, layout, sink.clone())?;
    let m = owned.len();
    let mut head = BlockFile::create(&path, block_bytes, sink.clone())?;
    let mut body = BlockFile::open(&path, adjv_offset(bucket), block_bytes, sink)?;

    let per_block = block_bytes / ID_BYTES;
    let mut buf: Vec<u64> = Vec::with_capacity(per_block);
    let mut at = adjv_offset(bucket);
    let mut flush = |buf: &mut Vec<u64>| -> Result<()> {
        if !buf.is_empty() {
            body.write_at(at, &encode_ids(buf))?;
            at += (buf.len() * ID_BYTES) as u64;
            buf.clear();
        }
        Ok(())
    };
    let offv = csr_from_sorted(owned.stream()?, base, bucket, |d| {
        buf.push(d);
        if buf.len() == per_block {
            flush(&mut buf)?;
        }
        Ok(())
    })?;
    flush(&mut buf)?;
    body.sync()?;
    if offv[bucket as usize] != m {
        return Err(Error::Corrupt(format!("offv ends at {} but {m} edges are owned", offv[bucket as usize])));
    }
    head.write_at(0, &header_and_offv(cfg.n(), base, &offv))?;
    head.sync()?;
    Ok(CsrBuildReport {
        edges: m,
        ..Default::default()
    })
}

/// Shared arrays of the hash builder.
struct HashShared {
    degv: Vec<AtomicU64>,
    cursor: Vec<AtomicU64>,
    offv: OnceLock<Vec<u64>>,
    chunks: Vec<ChunkDescriptor>,
    adj_flushes: AtomicU64,
    flushed_vertices: AtomicU64,
}

pub fn build_csr_hash(node: &NodeCtx, layout: &Layout) -> Result<CsrBuildReport> {
    let cfg = node.cfg();
    let bid = node.bid();
    let bucket = cfg.bucket();
    let base = bid as u64 * bucket;
    let path = layout.csr(bid);

    let m = open_owned(node, layout, crate::emstore::IoSink::new())?.len();
    let csz = m.div_ceil(cfg.cores as u64).max(1);
    let shared = HashShared {
        degv: (0..bucket).map(|_| AtomicU64::new(0)).collect(),
        cursor: (0..bucket).map(|_| AtomicU64::new(0)).collect(),
        offv: OnceLock::new(),
        chunks: chunk_partition(m, csz)?,
        adj_flushes: AtomicU64::new(0),
        flushed_vertices: AtomicU64::new(0),
    };
    let file = std::fs::File::create(&path).at(&path)?;
    file.set_len(adjv_offset(bucket) + m * ID_BYTES as u64).at(&path)?;
    drop(file);

    node.run_cores(|core| {
        let mem = crate::relabel::core_tracker(core);
        build_degv(core, layout, &shared, base, &mem)?;
        core.barrier()?;
        if core.tid() == 0 {
            let degv: Vec<u64> = shared.degv.iter().map(|d| d.load(Ordering::SeqCst)).collect();
            shared.offv.set(build_offv(&degv)).expect("offv is built once");
        }
        core.barrier()?;
        build_edgev(core, layout, &shared, base, &mem)?;
        node.metrics()
            .record_mem_peak("csr", "map-buffers", bid, Some(core.tid()), mem.peak());
        core.barrier()?;
        if core.tid() == 0 {
            for (v, (c, d)) in shared.cursor.iter().zip(&shared.degv).enumerate() {
                let (c, d) = (c.load(Ordering::SeqCst), d.load(Ordering::SeqCst));
                if c != d {
                    return Err(Error::Corrupt(format!(
                        "vertex {} filled {c} of {d} adjacency slots",
                        base + v as u64
                    )));
                }
            }
            let offv = shared.offv.get().unwrap();
            let mut head = BlockFile::open(&path, 0, cfg.block_bytes(), core.io_sink(HEADER_PHASE))?;
            head.write_at(0, &header_and_offv(cfg.n(), base, offv))?;
            head.sync()?;
        }
        Ok(())
    })?;
    Ok(CsrBuildReport {
        edges: m,
        adj_flushes: shared.adj_flushes.load(Ordering::SeqCst),
        flushed_vertices: shared.flushed_vertices.load(Ordering::SeqCst),
    })
}

fn core_chunk_stream(
    core: &CoreCtx<'_>,
    layout: &Layout,
    shared: &HashShared,
    phase: &str,
) -> Result<Option<EdgeStream>> {
    let Some(chunk) = shared.chunks.get(core.tid()) else {
        return Ok(None);
    };
    let mut owned = open_owned(core.node(), layout, core.io_sink(phase))?;
    owned.stream_chunk(chunk).map(Some)
}

/// Counts out-degrees of this core's chunk in a bounded map, adding the
/// whole map into the shared `degv` before it would outgrow `mmc`.
fn build_degv(core: &CoreCtx<'_>, layout: &Layout, shared: &HashShared, base: u64, mem: &MemTracker) -> Result<()> {
    let Some(stream) = core_chunk_stream(core, layout, shared, DEGV_PHASE)? else {
        return Ok(());
    };
    let budget = core.cfg().mem_per_core;
    let _block = mem.charge(core.cfg().block_bytes())?;
    let mut charge = mem.charge(0)?;
    let mut degh: BTreeMap<u64, u64> = BTreeMap::new();
    let flush = |degh: &mut BTreeMap<u64, u64>| {
        for (v, c) in std::mem::take(degh) {
            shared.degv[v as usize].fetch_add(c, Ordering::SeqCst);
        }
    };
    for e in stream {
        let local = e?.src - base;
        // flush first when a new entry would not fit
        if !degh.contains_key(&local) && (degh.len() + 1) * MAP_ENTRY_BYTES > budget {
            flush(&mut degh);
        }
        *degh.entry(local).or_insert(0) += 1;
        charge.set(degh.len() * MAP_ENTRY_BYTES)?;
    }
    flush(&mut degh);
    Ok(())
}

/// Buffers destinations per source in a bounded map; each flush reserves
/// slots with a fetch-and-add on the source's cursor and writes the buffer
/// there with one positioned write.
fn build_edgev(core: &CoreCtx<'_>, layout: &Layout, shared: &HashShared, base: u64, mem: &MemTracker) -> Result<()> {
    let Some(stream) = core_chunk_stream(core, layout, shared, EDGEV_PHASE)? else {
        return Ok(());
    };
    let cfg = core.cfg();
    let budget = cfg.mem_per_core;
    let offv = shared.offv.get().expect("offv built before edgev");
    let path = layout.csr(core.node().bid());
    let adj0 = adjv_offset(cfg.bucket());
    let mut out = BlockFile::open(&path, adj0, cfg.block_bytes(), core.io_sink(EDGEV_PHASE))?;
    let _block = mem.charge(cfg.block_bytes())?;
    let mut charge = mem.charge(0)?;
    let mut adjh: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut values = 0usize;

    let mut flush = |adjh: &mut BTreeMap<u64, Vec<u64>>| -> Result<()> {
        if adjh.is_empty() {
            return Ok(());
        }
        shared.adj_flushes.fetch_add(1, Ordering::SeqCst);
        shared.flushed_vertices.fetch_add(adjh.len() as u64, Ordering::SeqCst);
        for (v, buf) in std::mem::take(adjh) {
            let len = buf.len() as u64;
            let old = shared.cursor[v as usize].fetch_add(len, Ordering::SeqCst);
            let deg = shared.degv[v as usize].load(Ordering::SeqCst);
            if old + len > deg {
                return Err(Error::Corrupt(format!(
                    "adjacency cursor of vertex {} overruns its degree {deg}",
                    base + v
                )));
            }
            let slot = offv[v as usize] + old;
            out.write_at(adj0 + slot * ID_BYTES as u64, &encode_ids(&buf))?;
        }
        Ok(())
    };
    for e in stream {
        let e = e?;
        let local = e.src - base;
        let entries = adjh.len() + usize::from(!adjh.contains_key(&local));
        if entries * MAP_ENTRY_BYTES + (values + 1) * ID_BYTES > budget {
            flush(&mut adjh)?;
            values = 0;
        }
        adjh.entry(local).or_default().push(e.des);
        values += 1;
        charge.set(adjh.len() * MAP_ENTRY_BYTES + values * ID_BYTES)?;
    }
    flush(&mut adjh)?;
    out.sync()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_sorted(edges: &[Edge], base: u64, bucket: u64) -> CsrGraph {
        let mut adjv = Vec::new();
        let offv = csr_from_sorted(edges.iter().map(|&e| Ok(e)), base, bucket, |d| {
            adjv.push(d);
            Ok(())
        })
        .unwrap();
        CsrGraph { n: 16, base, offv, adjv }
    }

    // Naive oracle: bucket each edge by source, keep input order.
    fn naive(edges: &[Edge], base: u64, bucket: u64) -> CsrGraph {
        let mut lists = vec![Vec::new(); bucket as usize];
        for e in edges {
            lists[(e.src - base) as usize].push(e.des);
        }
        let degv: Vec<u64> = lists.iter().map(|l| l.len() as u64).collect();
        CsrGraph {
            n: 16,
            base,
            offv: build_offv(&degv),
            adjv: lists.concat(),
        }
    }

    #[test]
    fn offv_prefix_sums() {
        assert_eq!(build_offv(&[2, 0, 1]), vec![0, 2, 2, 3]);
        assert_eq!(build_offv(&[0, 0]), vec![0, 0, 0]);
    }

    #[test]
    fn offv_total_matches_sum() {
        let mut rng = crate::rng::RngStream::new(5, 5);
        let degv: Vec<u64> = (0..1 << 12).map(|_| rng.below(40)).collect();
        assert_eq!(*build_offv(&degv).last().unwrap(), degv.iter().sum::<u64>());
    }

    #[test]
    fn sorted_three_edge_example() {
        let edges = [Edge::new(0, 1), Edge::new(0, 2), Edge::new(2, 0)];
        let g = from_sorted(&edges, 0, 3);
        assert_eq!(g.offv, vec![0, 2, 2, 3]);
        assert_eq!(g.adjv, vec![1, 2, 0]);
        assert_eq!(g, naive(&edges, 0, 3));
    }

    #[test]
    fn empty_stream_gives_zero_offsets() {
        let g = from_sorted(&[], 4, 4);
        assert_eq!(g.offv, vec![0; 5]);
        assert!(g.adjv.is_empty());
    }

    #[test]
    fn unsorted_stream_aborts() {
        let edges = [Edge::new(2, 0), Edge::new(1, 0)];
        let r = csr_from_sorted(edges.iter().map(|&e| Ok(e)), 0, 4, |_| Ok(()));
        assert!(matches!(r, Err(Error::Unsorted { .. })));
    }

    proptest::proptest! {
        #[test]
        fn sorted_builder_matches_naive(mut srcs in proptest::collection::vec((0u64..32, 0u64..64), 0..200)) {
            srcs.sort_by_key(|p| p.0);
            let edges: Vec<Edge> = srcs.iter().map(|&(s, d)| Edge::new(32 + s, d)).collect();
            proptest::prop_assert_eq!(from_sorted(&edges, 32, 32), naive(&edges, 32, 32));
        }
    }

    #[test]
    fn bytes_round_trip() {
        let g = from_sorted(&[Edge::new(5, 1), Edge::new(7, 3)], 4, 4);
        let bytes = g.to_bytes();
        assert_eq!(bytes.len() as u64, HEADER_BYTES + 5 * 8 + 2 * 8);
        assert_eq!(CsrGraph::from_bytes(&bytes).unwrap(), g);
        assert!(CsrGraph::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn canonical_sorts_slices() {
        let g = CsrGraph {
            n: 4,
            base: 0,
            offv: vec![0, 2, 3],
            adjv: vec![3, 1, 0],
        };
        assert_eq!(g.canonical().adjv, vec![1, 3, 0]);
        assert_eq!(g.degrees(), vec![2, 1]);
    }
}
