// SPDX-License-Identifier: Apache-2.0

//! Working-memory accounting for per-core buffers.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Tracks bytes charged against a core's memory budget and the peak seen.
#[derive(Debug)]
pub struct MemTracker {
    limit: usize,
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemTracker {
    pub fn new(limit: usize) -> Self {
        MemTracker {
            limit,
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    fn add(&self, bytes: usize) -> Result<()> {
        let now = self.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
        if now > self.limit {
            self.current.fetch_sub(bytes, Ordering::Relaxed);
            return Err(Error::Config(format!(
                "memory budget exceeded: {now} bytes resident, limit {}",
                self.limit
            )));
        }
        Ok(())
    }

    fn sub(&self, bytes: usize) {
        self.current.fetch_sub(bytes, Ordering::Relaxed);
    }

    /// Charges `bytes`, released when the guard drops.
    pub fn charge(&self, bytes: usize) -> Result<MemCharge<'_>> {
        self.add(bytes)?;
        Ok(MemCharge {
            tracker: self,
            bytes,
        })
    }
}

/// A live charge; resizable for buffers that grow and shrink.
#[derive(Debug)]
pub struct MemCharge<'a> {
    tracker: &'a MemTracker,
    bytes: usize,
}

impl MemCharge<'_> {
    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn set(&mut self, bytes: usize) -> Result<()> {
        if bytes > self.bytes {
            self.tracker.add(bytes - self.bytes)?;
        } else {
            self.tracker.sub(self.bytes - bytes);
        }
        self.bytes = bytes;
        Ok(())
    }
}

impl Drop for MemCharge<'_> {
    fn drop(&mut self) {
        self.tracker.sub(self.bytes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_release() {
        let t = MemTracker::new(100);
        {
            let mut a = t.charge(40).unwrap();
            let _b = t.charge(30).unwrap();
            a.set(60).unwrap();
            assert_eq!(t.current(), 90);
            a.set(10).unwrap();
        }
        assert_eq!(t.current(), 0);
        assert_eq!(t.peak(), 90);
        assert!(t.charge(101).is_err());
        assert_eq!(t.current(), 0);
    }
}
