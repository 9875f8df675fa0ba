// SPDX-License-Identifier: Apache-2.0

//! Range and chunk partitioning.

use crate::config::ClusterConfig;
use crate::error::{Error, Result};
use crate::types::{ChunkDescriptor, NodeId, Range, VertexId};

/// Splits `[0, n)` into `k` contiguous ranges of width `n / k`.
pub fn range_partition(n: u64, k: u64) -> Result<Vec<Range>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cannot range-partition {n} identifiers into {k} parts"
        )));
    }
    if !n.is_multiple_of(k) {
        return Err(Error::Config(format!("{k} does not divide {n}")));
    }
    let w = n / k;
    Ok((0..k).map(|i| Range::new(i * w, (i + 1) * w)).collect())
}

/// Tiles `len` elements into chunks of `csz`, the last one possibly shorter.
pub fn chunk_partition(len: u64, csz: u64) -> Result<Vec<ChunkDescriptor>> {
    if csz == 0 {
        return Err(Error::Config("chunk size must be positive".into()));
    }
    let count = len.div_ceil(csz);
    Ok((0..count)
        .map(|i| {
            let offset = i * csz;
            ChunkDescriptor {
                index: i as usize,
                offset,
                len: csz.min(len - offset),
            }
        })
        .collect())
}

/// Node owning `v` under `RP(n, nb)`.
///
/// Panics if `v` is outside `[0, n)`.
pub fn owner_of(v: VertexId, cfg: &ClusterConfig) -> NodeId {
    assert!(
        v < cfg.n(),
        "vertex {v} out of range for a graph of {} vertices",
        cfg.n()
    );
    (v / cfg.bucket()) as NodeId
}
