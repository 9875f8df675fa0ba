// SPDX-License-Identifier: Apache-2.0

//! External-memory edge lists: chunked storage, in-memory chunk sort,
//! k-way sorted merge, block-buffered scans and I/O accounting.

mod io;
mod list;
mod mem;
mod stream;

pub use io::{BlockFile, IoCounters, IoSink, IoStats};
pub use list::{read_edge_file, BlockRewriter, ExtEdgeList, SortTag};
pub use mem::{MemCharge, MemTracker};
pub use stream::{sorted_merge, EdgeStream, FileStream, MergeStream};
