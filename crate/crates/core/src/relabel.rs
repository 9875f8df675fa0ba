// SPDX-License-Identifier: Apache-2.0

//! Sort-merge-join relabeling of edge endpoints.
//!
//! A field pass first sorts every chunk of a core's edge list on that
//! field, then sweeps the old identifiers `0..n` in ascending order while
//! the node's permutation ranges arrive one at a time. Each chunk keeps a
//! cursor; the run of entries equal to the current id is rewritten to its
//! new id and the cursor moves past it. Destination is relabeled first,
//! then source.

use std::sync::{Arc, Mutex};

use crate::cluster::{get_permute_range, CoreCtx};
use crate::emstore::{BlockRewriter, ExtEdgeList, MemTracker};
use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::types::{Edge, EdgeField, VertexId};

/// Rewrites the run of `field == id` starting at `elci` to `pid` and
/// returns the index just past it.
pub fn label_chunk(id: VertexId, pid: VertexId, elc: &mut [Edge], elci: usize, field: EdgeField) -> usize {
    let mut i = elci;
    while i < elc.len() && field.get(&elc[i]) == id {
        field.set(&mut elc[i], pid);
        i += 1;
    }
    i
}

/// Cursor of one on-disk chunk, holding a single block in memory.
#[derive(Debug)]
pub struct ChunkCursor {
    chunk: usize,
    rw: BlockRewriter,
    pos: usize,
    field: EdgeField,
}

impl ChunkCursor {
    pub fn new(chunk: usize, rw: BlockRewriter, field: EdgeField) -> Self {
        ChunkCursor {
            chunk,
            rw,
            pos: 0,
            field,
        }
    }

    /// Relabels every remaining entry equal to `id`. Entries below `id`
    /// mean the chunk was not sorted.
    pub fn label(&mut self, id: VertexId, pid: VertexId) -> Result<()> {
        loop {
            if self.rw.is_done() {
                return Ok(());
            }
            let block = self.rw.block_mut();
            if self.pos < block.len() {
                let v = self.field.get(&block[self.pos]);
                if v < id {
                    return Err(Error::Unsorted {
                        field: self.field,
                        input: self.chunk,
                        previous: id,
                        value: v,
                    });
                }
                self.pos = label_chunk(id, pid, block, self.pos, self.field);
                if self.pos < block.len() {
                    return Ok(());
                }
            }
            self.rw.advance()?;
            self.pos = 0;
        }
    }

    /// Closes the cursor; it must have consumed the whole chunk.
    pub fn finish(mut self) -> Result<()> {
        if !self.rw.is_done() {
            let block = self.rw.block_mut();
            let v = block.get(self.pos).map(|e| self.field.get(e));
            return Err(Error::Corrupt(format!(
                "chunk {} holds {} value {v:?} outside the identifier range",
                self.chunk, self.field
            )));
        }
        self.rw.finish()
    }

    pub fn buffer_bytes(&self) -> usize {
        self.rw.buffer_bytes()
    }
}

/// The current permutation range, shared by the cores of a node.
#[derive(Debug, Default)]
pub struct PermSlot(Mutex<Option<Arc<Vec<u64>>>>);

impl PermSlot {
    fn put(&self, range: Arc<Vec<u64>>) {
        *self.0.lock().unwrap() = Some(range);
    }

    fn get(&self) -> Result<Arc<Vec<u64>>> {
        self.0
            .lock()
            .unwrap()
            .clone()
            .ok_or_else(|| Error::PhaseOrder("permutation range read before it was fetched".into()))
    }
}

pub fn sort_phase(field: EdgeField) -> String {
    format!("relabel.{}.sort", field.as_str())
}

pub fn sweep_phase(field: EdgeField) -> String {
    format!("relabel.{}.sweep", field.as_str())
}

/// Working memory of one core: `mmc` for a chunk plus one block of slack.
pub fn core_tracker(core: &CoreCtx<'_>) -> MemTracker {
    MemTracker::new(core.cfg().mem_per_core + core.cfg().block_bytes())
}

/// One field pass for one core: chunk sort, then the lockstep id sweep.
/// Every core of the node must call this with the same `field` and `slot`.
pub fn label_edges(
    core: &CoreCtx<'_>,
    layout: &Layout,
    field: EdgeField,
    slot: &PermSlot,
    mem: &MemTracker,
) -> Result<()> {
    let cfg = core.cfg();
    let node = core.node();
    let (bid, tid) = (node.bid(), core.tid());
    let (block, chunk) = (cfg.block_edges, cfg.chunk_edges());
    let path = layout.relabeled(bid, tid);

    let sort_sink = core.io_sink(&sort_phase(field));
    match field {
        EdgeField::Des => {
            let mut gen = ExtEdgeList::open(&layout.generated(bid, tid), block, chunk, sort_sink.clone())?;
            let mut out = ExtEdgeList::create(&path, block, chunk, sort_sink)?;
            gen.sort_chunks_into(&mut out, field, mem)?;
        }
        EdgeField::Src => {
            let mut list = ExtEdgeList::open(&path, block, chunk, sort_sink)?;
            for c in list.chunks() {
                list.sort_chunk(&c, field, mem)?;
            }
        }
    }

    let mut list = ExtEdgeList::open(&path, block, chunk, core.io_sink(&sweep_phase(field)))?;
    sweep(core, &mut list, field, slot, mem)?;
    node.metrics()
        .record_mem_peak("relabel", "chunk-buffers", bid, Some(tid), mem.peak());
    Ok(())
}

fn sweep(
    core: &CoreCtx<'_>,
    list: &mut ExtEdgeList,
    field: EdgeField,
    slot: &PermSlot,
    mem: &MemTracker,
) -> Result<()> {
    let node = core.node();
    let bucket = core.cfg().bucket();
    let mut cursors = Vec::new();
    for c in list.chunks() {
        cursors.push(ChunkCursor::new(c.index, list.rewriter(&c)?, field));
    }
    let _charge = mem.charge(cursors.iter().map(ChunkCursor::buffer_bytes).sum())?;

    let mut id: VertexId = 0;
    for s in 0..core.cfg().nodes {
        if core.tid() == 0 {
            let range = get_permute_range(node, s)?;
            if range.len() as u64 != bucket {
                return Err(Error::Corrupt(format!(
                    "permutation range {s} has {} entries, expected {bucket}",
                    range.len()
                )));
            }
            slot.put(range);
        }
        core.barrier()?;
        let pv = slot.get()?;
        let base = s as u64 * bucket;
        while id < base + bucket {
            let pid = pv[(id - base) as usize];
            for cur in cursors.iter_mut() {
                cur.label(id, pid)?;
            }
            id += 1;
        }
        drop(pv);
        core.barrier()?;
    }
    for cur in cursors {
        cur.finish()?;
    }
    Ok(())
}

/// Relabels both fields of every core's edges on this node. Serves the
/// node's permutation slice to all nodes until the closing global barrier.
pub fn relabel_node(node: &crate::cluster::NodeCtx, layout: &Layout, perm: &[u64]) -> Result<()> {
    let slot = PermSlot::default();
    std::thread::scope(|s| {
        let server = s.spawn(|| crate::cluster::serve_permutation(node.endpoint(), perm));
        let work = node
            .run_cores(|core| {
                let mem = core_tracker(core);
                label_edges(core, layout, EdgeField::Des, &slot, &mem)?;
                label_edges(core, layout, EdgeField::Src, &slot, &mem)
            })
            .and_then(|_| node.global_barrier());
        let stopped = match &work {
            Ok(()) => crate::cluster::stop_permute_server(node.endpoint()),
            Err(_) => {
                node.cancel_token().cancel();
                Ok(())
            }
        };
        let served = server
            .join()
            .unwrap_or_else(|_| Err(Error::Corrupt("permute server panicked".into())));
        work?;
        stopped?;
        served.map(|_| ())
    })
}

/// Applies a full permutation to both fields of an in-memory edge list.
pub fn relabel_in_memory(edges: &mut [Edge], pv: &[u64]) {
    for e in edges {
        e.src = pv[e.src as usize];
        e.des = pv[e.des as usize];
    }
}
