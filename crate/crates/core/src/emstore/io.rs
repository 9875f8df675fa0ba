// SPDX-License-Identifier: Apache-2.0

//! Block-level I/O accounting.
//!
//! An access is sequential iff it starts exactly where the previous access
//! on the same handle ended (or at the position the handle was opened at).
//! Every other access is random. A transfer spanning several blocks counts
//! its first block by that rule and the rest as sequential.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::ops::{Add, AddAssign, Sub};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{IoContext, Result};

/// Block counts by access pattern.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub seq_reads: u64,
    pub seq_writes: u64,
    pub rand_reads: u64,
    pub rand_writes: u64,
}

impl IoStats {
    pub fn sequential(&self) -> u64 {
        self.seq_reads + self.seq_writes
    }

    pub fn random(&self) -> u64 {
        self.rand_reads + self.rand_writes
    }

    pub fn total(&self) -> u64 {
        self.sequential() + self.random()
    }

    /// `(name, value)` pairs in report order.
    pub fn counters(&self) -> [(&'static str, u64); 4] {
        [
            ("seq_reads", self.seq_reads),
            ("seq_writes", self.seq_writes),
            ("rand_reads", self.rand_reads),
            ("rand_writes", self.rand_writes),
        ]
    }
}

impl Add for IoStats {
    type Output = IoStats;

    fn add(self, o: IoStats) -> IoStats {
        IoStats {
            seq_reads: self.seq_reads + o.seq_reads,
            seq_writes: self.seq_writes + o.seq_writes,
            rand_reads: self.rand_reads + o.rand_reads,
            rand_writes: self.rand_writes + o.rand_writes,
        }
    }
}

impl AddAssign for IoStats {
    fn add_assign(&mut self, o: IoStats) {
        *self = *self + o;
    }
}

impl Sub for IoStats {
    type Output = IoStats;

    fn sub(self, o: IoStats) -> IoStats {
        IoStats {
            seq_reads: self.seq_reads - o.seq_reads,
            seq_writes: self.seq_writes - o.seq_writes,
            rand_reads: self.rand_reads - o.rand_reads,
            rand_writes: self.rand_writes - o.rand_writes,
        }
    }
}

/// Monotone atomic counters behind an [`IoStats`] snapshot.
#[derive(Debug, Default)]
pub struct IoCounters {
    seq_reads: AtomicU64,
    seq_writes: AtomicU64,
    rand_reads: AtomicU64,
    rand_writes: AtomicU64,
}

impl IoCounters {
    pub fn new() -> Arc<Self> {
        Arc::new(IoCounters::default())
    }

    pub fn snapshot(&self) -> IoStats {
        IoStats {
            seq_reads: self.seq_reads.load(Ordering::Relaxed),
            seq_writes: self.seq_writes.load(Ordering::Relaxed),
            rand_reads: self.rand_reads.load(Ordering::Relaxed),
            rand_writes: self.rand_writes.load(Ordering::Relaxed),
        }
    }

    fn record(&self, write: bool, sequential: u64, random: u64) {
        let (s, r) = if write {
            (&self.seq_writes, &self.rand_writes)
        } else {
            (&self.seq_reads, &self.rand_reads)
        };
        if sequential > 0 {
            s.fetch_add(sequential, Ordering::Relaxed);
        }
        if random > 0 {
            r.fetch_add(random, Ordering::Relaxed);
        }
    }
}

/// Fan-out of one access record to several counter sets (phase, core, list).
#[derive(Clone, Debug, Default)]
pub struct IoSink {
    targets: Vec<Arc<IoCounters>>,
}

impl IoSink {
    pub fn new() -> Self {
        IoSink::default()
    }

    pub fn with(mut self, counters: Arc<IoCounters>) -> Self {
        self.targets.push(counters);
        self
    }

    fn record(&self, write: bool, sequential: u64, random: u64) {
        for t in &self.targets {
            t.record(write, sequential, random);
        }
    }
}

/// A file handle that classifies and counts its block accesses.
#[derive(Debug)]
pub struct BlockFile {
    file: File,
    path: PathBuf,
    /// End of the previous access; where a sequential access must start.
    pos: u64,
    /// Actual OS cursor, to skip redundant seeks.
    os_pos: u64,
    block_bytes: u64,
    sink: IoSink,
}

impl BlockFile {
    /// Opens an existing file for reading and writing, positioned at `start`.
    pub fn open(path: &Path, start: u64, block_bytes: usize, sink: IoSink) -> Result<Self> {
        let file = OpenOptions::new().read(true).write(true).open(path).at(path)?;
        Self::wrap(file, path, start, block_bytes, sink)
    }

    /// Opens an existing file read-only, positioned at `start`.
    pub fn open_read(path: &Path, start: u64, block_bytes: usize, sink: IoSink) -> Result<Self> {
        let file = File::open(path).at(path)?;
        Self::wrap(file, path, start, block_bytes, sink)
    }

    /// Creates or truncates `path`, positioned at 0.
    pub fn create(path: &Path, block_bytes: usize, sink: IoSink) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).at(parent)?;
        }
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .at(path)?;
        Self::wrap(file, path, 0, block_bytes, sink)
    }

    fn wrap(mut file: File, path: &Path, start: u64, block_bytes: usize, sink: IoSink) -> Result<Self> {
        assert!(block_bytes > 0);
        if start != 0 {
            file.seek(SeekFrom::Start(start)).at(path)?;
        }
        Ok(BlockFile {
            file,
            path: path.to_path_buf(),
            pos: start,
            os_pos: start,
            block_bytes: block_bytes as u64,
            sink,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn file_len(&self) -> Result<u64> {
        Ok(self.file.metadata().at(&self.path)?.len())
    }

    fn account(&mut self, offset: u64, len: usize, write: bool) {
        if len == 0 {
            return;
        }
        let blocks = (len as u64).div_ceil(self.block_bytes);
        if offset == self.pos {
            self.sink.record(write, blocks, 0);
        } else {
            self.sink.record(write, blocks - 1, 1);
        }
        self.pos = offset + len as u64;
    }

    fn seek_to(&mut self, offset: u64) -> Result<()> {
        if self.os_pos != offset {
            self.file.seek(SeekFrom::Start(offset)).at(&self.path)?;
            self.os_pos = offset;
        }
        Ok(())
    }

    pub fn read_at(&mut self, offset: u64, buf: &mut [u8]) -> Result<()> {
        self.seek_to(offset)?;
        self.file.read_exact(buf).at(&self.path)?;
        self.os_pos += buf.len() as u64;
        self.account(offset, buf.len(), false);
        Ok(())
    }

    pub fn write_at(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        self.seek_to(offset)?;
        self.file.write_all(data).at(&self.path)?;
        self.os_pos += data.len() as u64;
        self.account(offset, data.len(), true);
        Ok(())
    }

    pub fn sync(&mut self) -> Result<()> {
        self.file.flush().at(&self.path)
    }
}
