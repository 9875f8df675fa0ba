// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::emstore::io::{BlockFile, IoCounters, IoSink, IoStats};
use crate::emstore::mem::MemTracker;
use crate::emstore::stream::{EdgeStream, FileStream};
use crate::error::{Error, IoContext, Result};
use crate::partition::chunk_partition;
use crate::types::{decode_edges, encode_edges, ChunkDescriptor, Edge, EdgeField, EDGE_BYTES};

/// Per-chunk sortedness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SortTag {
    #[default]
    None,
    By(EdgeField),
}

/// Append-only external edge list stored in one file.
///
/// Appends are buffered one block at a time. The file is logically tiled
/// into chunks of `chunk_edges` that can each be sorted in memory. There is
/// no delete.
#[derive(Debug)]
pub struct ExtEdgeList {
    path: PathBuf,
    len: u64,
    flushed: u64,
    block_edges: usize,
    chunk_edges: u64,
    own: Arc<IoCounters>,
    sink: IoSink,
    appender: BlockFile,
    wbuf: Vec<Edge>,
    reader: Option<BlockFile>,
    rewriter: Option<BlockFile>,
    tags: Vec<SortTag>,
    scratch: Vec<u8>,
}

impl ExtEdgeList {
    /// Creates (truncating) the backing file. `sink` receives every access
    /// in addition to the list's own counters.
    pub fn create(path: &Path, block_edges: usize, chunk_edges: u64, sink: IoSink) -> Result<Self> {
        assert!(block_edges > 0 && chunk_edges > 0);
        let own = IoCounters::new();
        let sink = sink.with(own.clone());
        let appender = BlockFile::create(path, block_edges * EDGE_BYTES, sink.clone())?;
        Ok(ExtEdgeList {
            path: path.to_path_buf(),
            len: 0,
            flushed: 0,
            block_edges,
            chunk_edges,
            own,
            sink,
            appender,
            wbuf: Vec::with_capacity(block_edges),
            reader: None,
            rewriter: None,
            tags: Vec::new(),
            scratch: Vec::new(),
        })
    }

    /// Opens an existing list; further appends go to the end.
    pub fn open(path: &Path, block_edges: usize, chunk_edges: u64, sink: IoSink) -> Result<Self> {
        assert!(block_edges > 0 && chunk_edges > 0);
        let bytes = std::fs::metadata(path).at(path)?.len();
        if bytes % EDGE_BYTES as u64 != 0 {
            return Err(Error::Corrupt(format!(
                "{} has {bytes} bytes, not a whole number of edges",
                path.display()
            )));
        }
        let own = IoCounters::new();
        let sink = sink.with(own.clone());
        let appender = BlockFile::open(path, bytes, block_edges * EDGE_BYTES, sink.clone())?;
        let len = bytes / EDGE_BYTES as u64;
        Ok(ExtEdgeList {
            path: path.to_path_buf(),
            len,
            flushed: len,
            block_edges,
            chunk_edges,
            own,
            sink,
            appender,
            wbuf: Vec::with_capacity(block_edges),
            reader: None,
            rewriter: None,
            tags: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn block_edges(&self) -> usize {
        self.block_edges
    }

    pub fn chunk_edges(&self) -> u64 {
        self.chunk_edges
    }

    /// Snapshot of this list's own counters.
    pub fn io_counters(&self) -> IoStats {
        self.own.snapshot()
    }

    pub fn append(&mut self, e: Edge) -> Result<()> {
        self.wbuf.push(e);
        self.len += 1;
        if self.wbuf.len() == self.block_edges {
            self.write_buffer()?;
        }
        Ok(())
    }

    pub fn extend_from_slice(&mut self, edges: &[Edge]) -> Result<()> {
        for &e in edges {
            self.append(e)?;
        }
        Ok(())
    }

    fn write_buffer(&mut self) -> Result<()> {
        if self.wbuf.is_empty() {
            return Ok(());
        }
        self.scratch.clear();
        encode_edges(&self.wbuf, &mut self.scratch);
        self.appender
            .write_at(self.flushed * EDGE_BYTES as u64, &self.scratch)?;
        self.flushed += self.wbuf.len() as u64;
        self.wbuf.clear();
        Ok(())
    }

    /// Writes any partially filled block. Called at phase boundaries.
    pub fn flush(&mut self) -> Result<()> {
        self.write_buffer()?;
        self.appender.sync()
    }

    pub fn chunks(&self) -> Vec<ChunkDescriptor> {
        chunk_partition(self.len, self.chunk_edges).expect("chunk size is positive")
    }

    pub fn sort_tag(&self, chunk: usize) -> SortTag {
        self.tags.get(chunk).copied().unwrap_or_default()
    }

    fn set_tag(&mut self, chunk: usize, tag: SortTag) {
        if self.tags.len() <= chunk {
            self.tags.resize(chunk + 1, SortTag::None);
        }
        self.tags[chunk] = tag;
    }

    fn ensure_reader(&mut self) -> Result<()> {
        if self.reader.is_none() {
            self.reader = Some(BlockFile::open_read(
                &self.path,
                0,
                self.block_edges * EDGE_BYTES,
                self.sink.clone(),
            )?);
        }
        Ok(())
    }

    fn check_chunk(&self, chunk: &ChunkDescriptor, mem: &MemTracker) -> Result<()> {
        if chunk.end() > self.len {
            return Err(Error::Corrupt(format!(
                "chunk {} [{}, {}) lies beyond list length {}",
                chunk.index,
                chunk.offset,
                chunk.end(),
                self.len
            )));
        }
        let bytes = chunk.len as usize * EDGE_BYTES;
        let budget = mem.limit().saturating_sub(self.block_edges * EDGE_BYTES);
        if bytes > budget {
            return Err(Error::Config(format!(
                "chunk of {bytes} bytes exceeds the per-core memory budget of {budget} bytes"
            )));
        }
        Ok(())
    }

    /// Reads one chunk into memory through the persistent reader handle.
    fn load_chunk(&mut self, chunk: &ChunkDescriptor, out: &mut Vec<Edge>) -> Result<()> {
        self.flush()?;
        self.ensure_reader()?;
        let reader = self.reader.as_mut().unwrap();
        out.clear();
        out.reserve(chunk.len as usize);
        let mut at = chunk.offset;
        let mut bytes = Vec::new();
        while at < chunk.end() {
            let count = (chunk.end() - at).min(self.block_edges as u64) as usize;
            bytes.resize(count * EDGE_BYTES, 0);
            reader.read_at(at * EDGE_BYTES as u64, &mut bytes)?;
            decode_edges(&bytes, out);
            at += count as u64;
        }
        Ok(())
    }

    /// Sorts one chunk in place, stably, on `field`.
    pub fn sort_chunk(&mut self, chunk: &ChunkDescriptor, field: EdgeField, mem: &MemTracker) -> Result<()> {
        self.check_chunk(chunk, mem)?;
        let _charge = mem.charge(chunk.len as usize * EDGE_BYTES + self.block_edges * EDGE_BYTES)?;
        let mut edges = Vec::new();
        self.load_chunk(chunk, &mut edges)?;
        edges.sort_by_key(|e| field.get(e));

        if self.rewriter.is_none() {
            self.rewriter = Some(BlockFile::open(
                &self.path,
                0,
                self.block_edges * EDGE_BYTES,
                self.sink.clone(),
            )?);
        }
        let rewriter = self.rewriter.as_mut().unwrap();
        let mut bytes = Vec::new();
        for (i, block) in edges.chunks(self.block_edges).enumerate() {
            bytes.clear();
            encode_edges(block, &mut bytes);
            let at = chunk.offset + (i * self.block_edges) as u64;
            rewriter.write_at(at * EDGE_BYTES as u64, &bytes)?;
        }
        rewriter.sync()?;
        self.set_tag(chunk.index, SortTag::By(field));
        Ok(())
    }

    /// Sorts every chunk on `field`, appending the sorted chunks to `dst`.
    /// `self` is left untouched.
    pub fn sort_chunks_into(&mut self, dst: &mut ExtEdgeList, field: EdgeField, mem: &MemTracker) -> Result<()> {
        if dst.chunk_edges != self.chunk_edges || !dst.len.is_multiple_of(dst.chunk_edges) {
            return Err(Error::Config(
                "sorted copy target must share the chunk size and start on a chunk boundary".into(),
            ));
        }
        let mut edges = Vec::new();
        for chunk in self.chunks() {
            self.check_chunk(&chunk, mem)?;
            let _charge = mem.charge(chunk.len as usize * EDGE_BYTES + self.block_edges * EDGE_BYTES)?;
            self.load_chunk(&chunk, &mut edges)?;
            edges.sort_by_key(|e| field.get(e));
            let index = (dst.len / dst.chunk_edges) as usize;
            dst.extend_from_slice(&edges)?;
            dst.set_tag(index, SortTag::By(field));
        }
        dst.flush()
    }

    /// Stream over the whole list in storage order, on a fresh handle.
    pub fn stream(&mut self) -> Result<EdgeStream> {
        self.flush()?;
        self.stream_range(0, self.len)
    }

    /// Stream over one chunk, on a fresh handle opened at the chunk start.
    pub fn stream_chunk(&mut self, chunk: &ChunkDescriptor) -> Result<EdgeStream> {
        self.flush()?;
        self.stream_range(chunk.offset, chunk.end())
    }

    fn stream_range(&self, start: u64, end: u64) -> Result<EdgeStream> {
        if end > self.len {
            return Err(Error::Corrupt(format!(
                "stream range ends at {end} beyond length {}",
                self.len
            )));
        }
        let file = BlockFile::open_read(
            &self.path,
            start * EDGE_BYTES as u64,
            self.block_edges * EDGE_BYTES,
            self.sink.clone(),
        )?;
        Ok(EdgeStream::File(FileStream::new(file, start, end, self.block_edges)))
    }

    /// Block-wise read-modify-write cursor over one chunk.
    pub fn rewriter(&mut self, chunk: &ChunkDescriptor) -> Result<BlockRewriter> {
        self.flush()?;
        BlockRewriter::new(&self.path, chunk, self.block_edges, self.sink.clone())
    }
}

/// Walks a chunk one block at a time; each block is read once and written
/// back once, through two handles that both advance sequentially.
#[derive(Debug)]
pub struct BlockRewriter {
    reader: BlockFile,
    writer: BlockFile,
    next: u64,
    end: u64,
    block_edges: usize,
    block: Vec<Edge>,
    block_start: u64,
    loaded: bool,
    bytes: Vec<u8>,
}

impl BlockRewriter {
    fn new(path: &Path, chunk: &ChunkDescriptor, block_edges: usize, sink: IoSink) -> Result<Self> {
        let start = chunk.offset * EDGE_BYTES as u64;
        let block_bytes = block_edges * EDGE_BYTES;
        let mut rw = BlockRewriter {
            reader: BlockFile::open_read(path, start, block_bytes, sink.clone())?,
            writer: BlockFile::open(path, start, block_bytes, sink)?,
            next: chunk.offset,
            end: chunk.end(),
            block_edges,
            block: Vec::with_capacity(block_edges),
            block_start: chunk.offset,
            loaded: false,
            bytes: Vec::new(),
        };
        rw.load_next()?;
        Ok(rw)
    }

    fn load_next(&mut self) -> Result<bool> {
        self.block.clear();
        self.loaded = false;
        if self.next >= self.end {
            return Ok(false);
        }
        let count = (self.end - self.next).min(self.block_edges as u64) as usize;
        self.bytes.resize(count * EDGE_BYTES, 0);
        self.reader.read_at(self.next * EDGE_BYTES as u64, &mut self.bytes)?;
        decode_edges(&self.bytes, &mut self.block);
        self.block_start = self.next;
        self.next += count as u64;
        self.loaded = true;
        Ok(true)
    }

    fn write_back(&mut self) -> Result<()> {
        if self.loaded {
            self.bytes.clear();
            encode_edges(&self.block, &mut self.bytes);
            self.writer
                .write_at(self.block_start * EDGE_BYTES as u64, &self.bytes)?;
            self.loaded = false;
        }
        Ok(())
    }

    /// Current block; empty once the chunk is exhausted.
    pub fn block_mut(&mut self) -> &mut [Edge] {
        &mut self.block
    }

    pub fn is_done(&self) -> bool {
        !self.loaded
    }

    /// Resident bytes of the block buffer.
    pub fn buffer_bytes(&self) -> usize {
        self.block_edges * EDGE_BYTES
    }

    /// Writes back the current block and loads the next; `false` at the end.
    pub fn advance(&mut self) -> Result<bool> {
        self.write_back()?;
        self.load_next()
    }

    /// Writes back the current block, if any.
    pub fn finish(mut self) -> Result<()> {
        self.write_back()?;
        self.writer.sync()
    }
}

/// Reads a whole edge file without I/O accounting (validation only).
pub fn read_edge_file(path: &Path) -> Result<Vec<Edge>> {
    let bytes = std::fs::read(path).at(path)?;
    if bytes.len() % EDGE_BYTES != 0 {
        return Err(Error::Corrupt(format!(
            "{} has {} bytes, not a whole number of edges",
            path.display(),
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(bytes.len() / EDGE_BYTES);
    decode_edges(&bytes, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn list(dir: &Path, block: usize, chunk: u64) -> ExtEdgeList {
        ExtEdgeList::create(&dir.join("el.bin"), block, chunk, IoSink::new()).unwrap()
    }

    #[test]
    fn append_then_scan() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 4, 8);
        assert_eq!(el.io_counters(), IoStats::default());
        el.append(Edge::new(1, 2)).unwrap();
        let got = el.stream().unwrap().collect_vec().unwrap();
        assert_eq!(got, vec![Edge::new(1, 2)]);
    }

    #[test]
    fn block_write_accounting() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 4, 8);
        for i in 0..4 {
            el.append(Edge::new(i, i)).unwrap();
        }
        assert_eq!(el.io_counters().seq_writes, 1);
        for i in 0..(10 * 4 + 1 - 4) {
            el.append(Edge::new(i, i)).unwrap();
        }
        el.flush().unwrap();
        let s = el.io_counters();
        assert_eq!(s.seq_writes, 11);
        assert_eq!(s.random(), 0);
    }

    #[test]
    fn scan_counts_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 4, 8);
        for i in 0..12 {
            el.append(Edge::new(i, 0)).unwrap();
        }
        el.flush().unwrap();
        let before = el.io_counters();
        let n = el.stream().unwrap().count();
        assert_eq!(n, 12);
        let delta = el.io_counters() - before;
        assert_eq!(delta.seq_reads, 3);
        assert_eq!(delta.rand_reads, 0);
    }

    #[test]
    fn sort_chunk_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 2, 4);
        el.extend_from_slice(&[Edge::new(3, 1), Edge::new(1, 2), Edge::new(3, 0)])
            .unwrap();
        let mem = MemTracker::new(1 << 10);
        let chunk = el.chunks()[0];
        el.sort_chunk(&chunk, EdgeField::Src, &mem).unwrap();
        let got = el.stream().unwrap().collect_vec().unwrap();
        assert_eq!(got, vec![Edge::new(1, 2), Edge::new(3, 1), Edge::new(3, 0)]);
        assert_eq!(el.sort_tag(0), SortTag::By(EdgeField::Src));
        assert_eq!(mem.current(), 0);
        assert_eq!(mem.peak(), (3 + 2) * EDGE_BYTES);
    }

    #[test]
    fn sort_chunk_io_and_idempotence() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 4, 10);
        for i in 0..10u64 {
            el.append(Edge::new(i, 9 - i)).unwrap();
        }
        el.flush().unwrap();
        let before_bytes = std::fs::read(el.path()).unwrap();
        let before = el.io_counters();
        let mem = MemTracker::new(1 << 10);
        let chunk = el.chunks()[0];
        el.sort_chunk(&chunk, EdgeField::Src, &mem).unwrap();
        let delta = el.io_counters() - before;
        assert_eq!(delta.seq_reads, 3);
        assert_eq!(delta.seq_writes, 3);
        assert_eq!(delta.random(), 0);
        assert_eq!(std::fs::read(el.path()).unwrap(), before_bytes);
    }

    #[test]
    fn sort_chunk_matches_reference_sort() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 64, 10_000);
        let mut rng = RngStream::new(5, 5);
        let edges: Vec<Edge> = (0..10_000)
            .map(|_| Edge::new(rng.below(500), rng.below(500)))
            .collect();
        el.extend_from_slice(&edges).unwrap();
        let mem = MemTracker::new(1 << 20);
        let chunk = el.chunks()[0];
        el.sort_chunk(&chunk, EdgeField::Des, &mem).unwrap();
        let mut expected = edges.clone();
        expected.sort_by_key(|e| e.des);
        assert_eq!(el.stream().unwrap().collect_vec().unwrap(), expected);
    }

    #[test]
    fn oversized_chunk_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 2, 100);
        el.extend_from_slice(&vec![Edge::new(0, 0); 100]).unwrap();
        let mem = MemTracker::new(64);
        let chunk = el.chunks()[0];
        assert!(matches!(
            el.sort_chunk(&chunk, EdgeField::Src, &mem),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rewriter_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut el = list(dir.path(), 3, 8);
        for i in 0..8u64 {
            el.append(Edge::new(i, i)).unwrap();
        }
        el.flush().unwrap();
        let chunk = el.chunks()[0];
        let before = el.io_counters();
        let mut rw = el.rewriter(&chunk).unwrap();
        loop {
            for e in rw.block_mut() {
                e.des += 100;
            }
            if !rw.advance().unwrap() {
                break;
            }
        }
        rw.finish().unwrap();
        let delta = el.io_counters() - before;
        assert_eq!((delta.seq_reads, delta.seq_writes, delta.random()), (3, 3, 0));
        let got = el.stream().unwrap().collect_vec().unwrap();
        assert!(got.iter().enumerate().all(|(i, e)| e.des == i as u64 + 100));
    }

    #[test]
    fn reopen_preserves_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("el.bin");
        {
            let mut el = ExtEdgeList::create(&path, 4, 8, IoSink::new()).unwrap();
            el.extend_from_slice(&[Edge::new(1, 1), Edge::new(2, 2)]).unwrap();
            el.flush().unwrap();
        }
        let mut el = ExtEdgeList::open(&path, 4, 8, IoSink::new()).unwrap();
        assert_eq!(el.len(), 2);
        el.append(Edge::new(3, 3)).unwrap();
        el.flush().unwrap();
        assert_eq!(read_edge_file(&path).unwrap().len(), 3);
    }

    proptest::proptest! {
        #[test]
        fn scan_after_append_round_trips(
            raw in proptest::collection::vec((0u64..u64::MAX, 0u64..u64::MAX), 0..300),
            block in 1usize..17,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut el = list(dir.path(), block, 64);
            let edges: Vec<Edge> = raw.iter().map(|&(s, d)| Edge::new(s, d)).collect();
            el.extend_from_slice(&edges).unwrap();
            el.flush().unwrap();
            let mut expected_bytes = Vec::new();
            encode_edges(&edges, &mut expected_bytes);
            proptest::prop_assert_eq!(std::fs::read(el.path()).unwrap(), expected_bytes);
            proptest::prop_assert_eq!(el.stream().unwrap().collect_vec().unwrap(), edges);
        }
    }
}
