// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every phase of the generator.

use std::fmt;
use std::str::FromStr;

/// Vertex identifier in `[0, n)`.
pub type VertexId = u64;

/// Index of a compute node in `[0, nb)`.
pub type NodeId = usize;

/// Bytes per stored edge record: two little-endian `u64`s.
pub const EDGE_BYTES: usize = 16;

/// Bytes per stored vertex identifier.
pub const ID_BYTES: usize = 8;

/// A directed `(src, des)` pair. Self-loops and duplicates are legal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: VertexId,
    pub des: VertexId,
}

impl Edge {
    pub const fn new(src: VertexId, des: VertexId) -> Self {
        Edge { src, des }
    }

    pub fn reversed(self) -> Self {
        Edge::new(self.des, self.src)
    }

    pub fn to_le_bytes(self) -> [u8; EDGE_BYTES] {
        let mut out = [0u8; EDGE_BYTES];
        out[..8].copy_from_slice(&self.src.to_le_bytes());
        out[8..].copy_from_slice(&self.des.to_le_bytes());
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Self {
        let src = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let des = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        Edge { src, des }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.src, self.des)
    }
}

pub fn encode_edges(edges: &[Edge], out: &mut Vec<u8>) {
    out.reserve(edges.len() * EDGE_BYTES);
    for e in edges {
        out.extend_from_slice(&e.to_le_bytes());
    }
}

/// Decodes whole records; a trailing partial record is ignored.
pub fn decode_edges(bytes: &[u8], out: &mut Vec<Edge>) {
    out.extend(bytes.chunks_exact(EDGE_BYTES).map(Edge::from_le_bytes));
}

pub fn encode_ids(ids: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ids.len() * ID_BYTES);
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

pub fn decode_ids(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks_exact(ID_BYTES)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Which endpoint of an edge an operation keys on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeField {
    Src,
    Des,
}

impl EdgeField {
    #[inline]
    pub fn get(self, e: &Edge) -> VertexId {
        match self {
            EdgeField::Src => e.src,
            EdgeField::Des => e.des,
        }
    }

    #[inline]
    pub fn set(self, e: &mut Edge, v: VertexId) {
        match self {
            EdgeField::Src => e.src = v,
            EdgeField::Des => e.des = v,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeField::Src => "src",
            EdgeField::Des => "des",
        }
    }
}

impl fmt::Display for EdgeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "src" => Ok(EdgeField::Src),
            "des" | "dst" => Ok(EdgeField::Des),
            other => Err(format!("unknown edge field `{other}`")),
        }
    }
}

/// Half-open identifier range `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Range {
    pub lo: VertexId,
    pub hi: VertexId,
}

impl Range {
    pub fn new(lo: VertexId, hi: VertexId) -> Self {
        debug_assert!(lo <= hi);
        Range { lo, hi }
    }

    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.lo <= v && v < self.hi
    }
}

/// One tile of a chunk-partitioned collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChunkDescriptor {
    pub index: usize,
    /// Element index of the first element.
    pub offset: u64,
    pub len: u64,
}

impl ChunkDescriptor {
    pub fn end(&self) -> u64 {
        self.offset + self.len
    }
}
