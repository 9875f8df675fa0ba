// SPDX-License-Identifier: Apache-2.0

//! Scatter/gather of relabeled edges to the node owning their source.
//!
//! Per node, a scatter worker streams the local edges into one packet per
//! destination and a collector appends incoming packets to the owned list.
//! Every scatterer ends with one end-of-stream per destination, so a
//! collector is done after `nb` of them.
//!
//! In sorted mode each core first re-sorts its chunks by the new source,
//! the scatter input is the merge of all those chunks, and the collector
//! keeps one sorted run per sender and merges the runs at the end.

use crate::cluster::{Channel, MessageKind, NodeCtx};
use crate::config::RedistributeMode;
use crate::emstore::{sorted_merge, EdgeStream, ExtEdgeList, IoSink};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::partition::owner_of;
use crate::relabel::core_tracker;
use crate::types::{decode_edges, encode_edges, Edge, EdgeField, NodeId, EDGE_BYTES};

pub const SORT_PHASE: &str = "redistribute.sort";
pub const SCATTER_PHASE: &str = "redistribute.scatter";
pub const COLLECT_PHASE: &str = "redistribute.collect";

/// Ships this node's edges to their owners and returns the number of edges
/// this node now owns.
pub fn redistribute_node(node: &NodeCtx, layout: &Layout) -> Result<u64> {
    let cfg = node.cfg();
    let mode = cfg.redistribute;
    if mode == RedistributeMode::Sorted {
        node.run_cores(|core| {
            let (bid, tid) = (node.bid(), core.tid());
            let sink = core.io_sink(SORT_PHASE);
            let mut src = ExtEdgeList::open(&layout.relabeled(bid, tid), cfg.block_edges, cfg.chunk_edges(), sink.clone())?;
            let mut dst = ExtEdgeList::create(&layout.src_sorted(bid, tid), cfg.block_edges, cfg.chunk_edges(), sink)?;
            let mem = core_tracker(core);
            src.sort_chunks_into(&mut dst, EdgeField::Src, &mem)?;
            node.metrics()
                .record_mem_peak(SORT_PHASE, "chunk-buffers", bid, Some(tid), mem.peak());
            Ok(())
        })?;
    }

    std::thread::scope(|s| {
        let collector = s.spawn(|| {
            let r = collect_edges(node, layout, mode);
            if r.is_err() {
                node.cancel_token().cancel();
            }
            r
        });
        let scattered = node
            .global_barrier()
            .and_then(|_| scatter_input(node, layout, mode))
            .and_then(|input| redistribute_edges(node, input));
        if scattered.is_err() {
            node.cancel_token().cancel();
        }
        let owned = collector
            .join()
            .unwrap_or_else(|_| Err(Error::Corrupt("collector panicked".into())));
        scattered?;
        owned
    })
}

/// The local edge stream to scatter: every core's relabeled list in core
/// order, or the merge of every src-sorted chunk.
fn scatter_input(node: &NodeCtx, layout: &Layout, mode: RedistributeMode) -> Result<EdgeStream> {
    let cfg = node.cfg();
    let sink = node.io_sink(SCATTER_PHASE);
    let mut streams = Vec::new();
    for tid in 0..cfg.cores {
        let path = match mode {
            RedistributeMode::Unordered => layout.relabeled(node.bid(), tid),
            RedistributeMode::Sorted => layout.src_sorted(node.bid(), tid),
        };
        let mut list = ExtEdgeList::open(&path, cfg.block_edges, cfg.chunk_edges(), sink.clone())?;
        match mode {
            RedistributeMode::Unordered => streams.push(list.stream()?),
            RedistributeMode::Sorted => {
                for c in list.chunks() {
                    streams.push(list.stream_chunk(&c)?);
                }
            }
        }
    }
    match mode {
        RedistributeMode::Unordered => Ok(EdgeStream::chain(streams)),
        RedistributeMode::Sorted => sorted_merge(streams, EdgeField::Src),
    }
}

/// Packs `input` into per-owner packets. Full packets leave at once; the
/// residual packets and one end-of-stream per destination follow at the end.
pub fn redistribute_edges(node: &NodeCtx, mut input: EdgeStream) -> Result<()> {
    let cfg = node.cfg();
    let ep = node.endpoint();
    let n = cfg.n();
    let cap = cfg.packet_edges();
    let mut packets: Vec<Vec<Edge>> = (0..cfg.nodes).map(|_| Vec::with_capacity(cap)).collect();
    let mut bytes = Vec::with_capacity(cap * EDGE_BYTES);
    let mut ship = |dst: NodeId, packet: &mut Vec<Edge>| -> Result<()> {
        bytes.clear();
        encode_edges(packet, &mut bytes);
        packet.clear();
        ep.send(dst, Channel::Edges, MessageKind::EdgePacket, bytes.clone())
    };
    while let Some(e) = input.next_edge()? {
        if e.src >= n || e.des >= n {
            return Err(Error::Corrupt(format!("edge {e} has an endpoint outside [0, {n})")));
        }
        let dst = owner_of(e.src, cfg);
        packets[dst].push(e);
        if packets[dst].len() == cap {
            ship(dst, &mut packets[dst])?;
        }
    }
    for (dst, packet) in packets.iter_mut().enumerate() {
        if !packet.is_empty() {
            ship(dst, packet)?;
        }
    }
    for dst in 0..cfg.nodes {
        ep.send_end_of_stream(dst, Channel::Edges)?;
    }
    Ok(())
}

/// Receives packets until every node has signalled end-of-stream and
/// builds `owned.bin`. Returns the owned edge count.
pub fn collect_edges(node: &NodeCtx, layout: &Layout, mode: RedistributeMode) -> Result<u64> {
    let cfg = node.cfg();
    let bid = node.bid();
    let range = (bid as u64 * cfg.bucket())..((bid as u64 + 1) * cfg.bucket());
    let sink = node.io_sink(COLLECT_PHASE);
    let open = |path: std::path::PathBuf| ExtEdgeList::create(&path, cfg.block_edges, cfg.chunk_edges(), sink.clone());

    let mut owned = open(layout.owned(bid))?;
    let mut runs: Vec<(ExtEdgeList, Option<u64>)> = match mode {
        RedistributeMode::Unordered => Vec::new(),
        RedistributeMode::Sorted => (0..cfg.nodes)
            .map(|j| open(layout.owned_run(bid, j)).map(|l| (l, None)))
            .collect::<Result<_>>()?,
    };

    let mut finished = 0;
    let mut edges = Vec::new();
    while finished < cfg.nodes {
        let msg = node.endpoint().recv_any(Channel::Edges)?;
        if msg.is_end_of_stream() {
            finished += 1;
            continue;
        }
        if msg.payload.len() % EDGE_BYTES != 0 {
            return Err(Error::Transport(format!(
                "edge packet from node {} has {} bytes",
                msg.source,
                msg.payload.len()
            )));
        }
        edges.clear();
        decode_edges(&msg.payload, &mut edges);
        if let Some(e) = edges.iter().find(|e| !range.contains(&e.src)) {
            return Err(Error::Corrupt(format!(
                "node {bid} received edge {e} from node {} outside its range [{}, {})",
                msg.source, range.start, range.end
            )));
        }
        match mode {
            RedistributeMode::Unordered => owned.extend_from_slice(&edges)?,
            RedistributeMode::Sorted => {
                let (run, last) = &mut runs[msg.source];
                for e in &edges {
                    if let Some(prev) = *last {
                        if e.src < prev {
                            return Err(Error::Unsorted {
                                field: EdgeField::Src,
                                input: msg.source,
                                previous: prev,
                                value: e.src,
                            });
                        }
                    }
                    *last = Some(e.src);
                }
                run.extend_from_slice(&edges)?;
            }
        }
    }

    if mode == RedistributeMode::Sorted {
        let mut streams = Vec::with_capacity(runs.len());
        for (run, _) in runs.iter_mut() {
            streams.push(run.stream()?);
        }
        let mut merged = sorted_merge(streams, EdgeField::Src)?;
        while let Some(e) = merged.next_edge()? {
            owned.append(e)?;
        }
    }
    owned.flush()?;
    Ok(owned.len())
}

/// Unaccounted handle on an existing owned list, for read-only consumers.
pub fn open_owned(layout: &Layout, node: &NodeCtx, sink: IoSink) -> Result<ExtEdgeList> {
    let cfg = node.cfg();
    ExtEdgeList::open(&layout.owned(node.bid()), cfg.block_edges, cfg.chunk_edges(), sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::run_cluster;
    use crate::config::ClusterConfig;
    use crate::emstore::read_edge_file;
    use crate::metrics::Metrics;

    fn cfg(dir: &std::path::Path, nodes: usize, mode: RedistributeMode) -> ClusterConfig {
        ClusterConfig {
            scale: 2,
            nodes,
            redistribute: mode,
            csr_variant: match mode {
                RedistributeMode::Unordered => crate::config::CsrVariant::Hash,
                RedistributeMode::Sorted => crate::config::CsrVariant::Sorted,
            },
            workdir: dir.to_path_buf(),
            block_edges: 2,
            packet_bytes: 2 * EDGE_BYTES,
            watchdog_secs: 5,
            ..Default::default()
        }
    }

    fn seed_relabeled(layout: &Layout, node: NodeId, edges: &[Edge]) {
        let mut el = ExtEdgeList::create(&layout.relabeled(node, 0), 2, 2, IoSink::new()).unwrap();
        el.extend_from_slice(edges).unwrap();
        el.flush().unwrap();
    }

    fn run(c: &ClusterConfig, local: &[Vec<Edge>]) -> Vec<Vec<Edge>> {
        let layout = Layout::new(&c.workdir);
        for (i, edges) in local.iter().enumerate() {
            seed_relabeled(&layout, i, edges);
        }
        run_cluster(c, Metrics::new(), |node| redistribute_node(node, &layout)).unwrap();
        (0..c.nodes)
            .map(|i| read_edge_file(&layout.owned(i)).unwrap())
            .collect()
    }

    #[test]
    fn two_nodes_route_by_owner() {
        for mode in [RedistributeMode::Unordered, RedistributeMode::Sorted] {
            let dir = tempfile::tempdir().unwrap();
            let owned = run(&cfg(dir.path(), 2, mode), &[vec![Edge::new(0, 3), Edge::new(3, 1)], vec![]]);
            assert_eq!(owned, vec![vec![Edge::new(0, 3)], vec![Edge::new(3, 1)]]);
        }
    }

    #[test]
    fn single_node_keeps_everything() {
        let dir = tempfile::tempdir().unwrap();
        let local = vec![Edge::new(2, 1), Edge::new(0, 0), Edge::new(3, 3)];
        let owned = run(&cfg(dir.path(), 1, RedistributeMode::Unordered), std::slice::from_ref(&local));
        assert_eq!(owned, vec![local]);
    }

    #[test]
    fn sorted_mode_merges_sender_runs() {
        let dir = tempfile::tempdir().unwrap();
        let c = ClusterConfig {
            scale: 4,
            ..cfg(dir.path(), 2, RedistributeMode::Sorted)
        };
        let local = vec![
            vec![Edge::new(4, 0), Edge::new(0, 1), Edge::new(2, 2)],
            vec![Edge::new(3, 3), Edge::new(1, 4)],
        ];
        let owned = run(&c, &local);
        let srcs: Vec<u64> = owned[0].iter().map(|e| e.src).collect();
        assert_eq!(srcs, vec![0, 1, 2, 3, 4]);
        assert!(owned[1].is_empty());
    }

    #[test]
    fn empty_node_gets_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let owned = run(&cfg(dir.path(), 2, RedistributeMode::Unordered), &[vec![Edge::new(0, 0)], vec![]]);
        assert!(owned[1].is_empty());
    }

    #[test]
    fn out_of_range_source_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), 1, RedistributeMode::Unordered);
        let layout = Layout::new(&c.workdir);
        seed_relabeled(&layout, 0, &[Edge::new(9, 0)]);
        let err = run_cluster(&c, Metrics::new(), |node| redistribute_node(node, &layout)).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "{err}");
    }
}
