// SPDX-License-Identifier: Apache-2.0

//! Block-buffered edge streams and the k-way sorted merge.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::emstore::io::BlockFile;
use crate::error::{Error, Result};
use crate::types::{decode_edges, Edge, EdgeField, EDGE_BYTES};

/// Reads `[start, end)` (edge indices) of one file a block at a time.
#[derive(Debug)]
pub struct FileStream {
    file: BlockFile,
    next: u64,
    end: u64,
    block_edges: usize,
    buf: Vec<Edge>,
    pos: usize,
    bytes: Vec<u8>,
}

impl FileStream {
    /// `file` should be positioned at `start * EDGE_BYTES`.
    pub fn new(file: BlockFile, start: u64, end: u64, block_edges: usize) -> Self {
        FileStream {
            file,
            next: start,
            end,
            block_edges,
            buf: Vec::with_capacity(block_edges),
            pos: 0,
            bytes: Vec::new(),
        }
    }

    fn fill(&mut self) -> Result<bool> {
        if self.next >= self.end {
            return Ok(false);
        }
        let count = (self.end - self.next).min(self.block_edges as u64) as usize;
        self.bytes.resize(count * EDGE_BYTES, 0);
        self.file
            .read_at(self.next * EDGE_BYTES as u64, &mut self.bytes)?;
        self.buf.clear();
        decode_edges(&self.bytes, &mut self.buf);
        self.pos = 0;
        self.next += count as u64;
        Ok(true)
    }

    fn next_edge(&mut self) -> Result<Option<Edge>> {
        if self.pos == self.buf.len() && !self.fill()? {
            return Ok(None);
        }
        let e = self.buf[self.pos];
        self.pos += 1;
        Ok(Some(e))
    }

    fn remaining(&self) -> u64 {
        (self.end - self.next) + (self.buf.len() - self.pos) as u64
    }
}

/// Stable k-way merge; ties go to the lower input index.
#[derive(Debug)]
pub struct MergeStream {
    inputs: Vec<EdgeStream>,
    heads: Vec<Option<Edge>>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    field: EdgeField,
}

impl MergeStream {
    fn new(mut inputs: Vec<EdgeStream>, field: EdgeField) -> Result<Self> {
        let mut heads = Vec::with_capacity(inputs.len());
        let mut heap = BinaryHeap::with_capacity(inputs.len());
        for (i, input) in inputs.iter_mut().enumerate() {
            let head = input.next_edge()?;
            if let Some(e) = head {
                heap.push(Reverse((field.get(&e), i)));
            }
            heads.push(head);
        }
        Ok(MergeStream {
            inputs,
            heads,
            heap,
            field,
        })
    }

    fn next_edge(&mut self) -> Result<Option<Edge>> {
        let Some(Reverse((key, i))) = self.heap.pop() else {
            return Ok(None);
        };
        let out = self.heads[i].take().expect("heap entry without head");
        if let Some(e) = self.inputs[i].next_edge()? {
            let next_key = self.field.get(&e);
            if next_key < key {
                return Err(Error::Unsorted {
                    field: self.field,
                    input: i,
                    previous: key,
                    value: next_key,
                });
            }
            self.heads[i] = Some(e);
            self.heap.push(Reverse((next_key, i)));
        }
        Ok(Some(out))
    }

    fn remaining(&self) -> u64 {
        let buffered = self.heads.iter().filter(|h| h.is_some()).count() as u64;
        buffered + self.inputs.iter().map(EdgeStream::remaining).sum::<u64>()
    }
}

/// A forward-only cursor over edges, from disk, memory, or a merge of streams.
#[derive(Debug)]
pub enum EdgeStream {
    File(FileStream),
    Memory(std::vec::IntoIter<Edge>),
    Chain(VecDeque<EdgeStream>),
    Merge(Box<MergeStream>),
}

impl EdgeStream {
    pub fn from_vec(edges: Vec<Edge>) -> Self {
        EdgeStream::Memory(edges.into_iter())
    }

    /// Concatenation of `streams` in order.
    pub fn chain(streams: Vec<EdgeStream>) -> Self {
        EdgeStream::Chain(streams.into())
    }

    pub fn next_edge(&mut self) -> Result<Option<Edge>> {
        match self {
            EdgeStream::File(f) => f.next_edge(),
            EdgeStream::Memory(it) => Ok(it.next()),
            EdgeStream::Merge(m) => m.next_edge(),
            EdgeStream::Chain(parts) => {
                while let Some(front) = parts.front_mut() {
                    if let Some(e) = front.next_edge()? {
                        return Ok(Some(e));
                    }
                    parts.pop_front();
                }
                Ok(None)
            }
        }
    }

    /// Edges not yet yielded.
    pub fn remaining(&self) -> u64 {
        match self {
            EdgeStream::File(f) => f.remaining(),
            EdgeStream::Memory(it) => it.len() as u64,
            EdgeStream::Merge(m) => m.remaining(),
            EdgeStream::Chain(parts) => parts.iter().map(EdgeStream::remaining).sum(),
        }
    }

    pub fn collect_vec(mut self) -> Result<Vec<Edge>> {
        let mut out = Vec::with_capacity(self.remaining() as usize);
        while let Some(e) = self.next_edge()? {
            out.push(e);
        }
        Ok(out)
    }
}

impl Iterator for EdgeStream {
    type Item = Result<Edge>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_edge().transpose()
    }
}

/// Merges individually sorted streams into one stream sorted on `field`.
///
/// Duplicates are kept; equal keys come out in input-index order. An input
/// found out of order aborts with [`Error::Unsorted`].
pub fn sorted_merge(inputs: Vec<EdgeStream>, field: EdgeField) -> Result<EdgeStream> {
    Ok(EdgeStream::Merge(Box::new(MergeStream::new(inputs, field)?)))
}
