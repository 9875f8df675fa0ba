// SPDX-License-Identifier: Apache-2.0

//! External-memory distributed R-MAT graph generation.
//!
//! The pipeline runs on an in-process simulated cluster of `nb` nodes with
//! `nc` cores each:
//!
//! 1. [`shuffle`]: distributed random shuffle producing the permutation
//!    vector, range-partitioned across nodes.
//! 2. [`rmat`]: every core appends `b * f` R-MAT edges to its own
//!    external edge list.
//! 3. [`relabel`]: sort-merge-join of each core's chunks against the
//!    permutation ranges, destination field first, then source.
//! 4. [`redistribute`]: scatter/gather of edges to the node owning their
//!    new source.
//! 5. [`csr`]: per-node CSR construction, hash/atomic or sorted-stream.
//!
//! All disk traffic goes through [`emstore`], which counts block accesses
//! as sequential or random. [`validate`] holds the in-memory oracle.

pub mod cluster;
pub mod config;
pub mod csr;
pub mod emstore;
pub mod error;
pub mod layout;
pub mod manifest;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod redistribute;
pub mod relabel;
pub mod rmat;
pub mod rng;
pub mod shuffle;
pub mod types;
pub mod validate;

pub use config::{ClusterConfig, CsrVariant, RedistributeMode, RmatParams};
pub use error::{Error, Result};
pub use types::{ChunkDescriptor, Edge, EdgeField, NodeId, Range, VertexId};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
