// SPDX-License-Identifier: Apache-2.0

//! Per-run registry of I/O counters, memory peaks and phase wall times.
//!
//! I/O is keyed by a dotted phase name (`relabel.des.sweep`) plus optional
//! node and core. Every access lands in the phase total, the per-node row
//! and, for core-level work, the per-core row.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::emstore::{IoCounters, IoSink, IoStats};
use crate::types::NodeId;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IoKey {
    pub phase: String,
    pub node: Option<NodeId>,
    pub core: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MemKey {
    pub phase: String,
    pub label: String,
    pub node: NodeId,
    pub core: Option<usize>,
}

#[derive(Debug, Default)]
pub struct Metrics {
    io: Mutex<BTreeMap<IoKey, Arc<IoCounters>>>,
    mem: Mutex<BTreeMap<MemKey, usize>>,
    times: Mutex<BTreeMap<String, Duration>>,
}

impl Metrics {
    pub fn new() -> Arc<Self> {
        Arc::new(Metrics::default())
    }

    fn counters(&self, key: IoKey) -> Arc<IoCounters> {
        self.io
            .lock()
            .unwrap()
            .entry(key)
            .or_default()
            .clone()
    }

    /// Sink recording into the phase total, the node row and the core row.
    pub fn sink(&self, phase: &str, node: NodeId, core: Option<usize>) -> IoSink {
        let key = |node, core| IoKey {
            phase: phase.to_string(),
            node,
            core,
        };
        let mut sink = IoSink::new()
            .with(self.counters(key(None, None)))
            .with(self.counters(key(Some(node), None)));
        if core.is_some() {
            sink = sink.with(self.counters(key(Some(node), core)));
        }
        sink
    }

    fn get(&self, key: &IoKey) -> IoStats {
        self.io
            .lock()
            .unwrap()
            .get(key)
            .map(|c| c.snapshot())
            .unwrap_or_default()
    }

    /// Cluster-wide total for exactly `phase`.
    pub fn phase_io(&self, phase: &str) -> IoStats {
        self.get(&IoKey {
            phase: phase.to_string(),
            node: None,
            core: None,
        })
    }

    /// Cluster-wide total over `prefix` and all its dotted sub-phases.
    pub fn phase_io_prefix(&self, prefix: &str) -> IoStats {
        let nested = format!("{prefix}.");
        self.io
            .lock()
            .unwrap()
            .iter()
            .filter(|(k, _)| {
                k.node.is_none() && (k.phase == prefix || k.phase.starts_with(&nested))
            })
            .fold(IoStats::default(), |acc, (_, c)| acc + c.snapshot())
    }

    pub fn node_io(&self, phase: &str, node: NodeId) -> IoStats {
        self.get(&IoKey {
            phase: phase.to_string(),
            node: Some(node),
            core: None,
        })
    }

    pub fn core_io(&self, phase: &str, node: NodeId, core: usize) -> IoStats {
        self.get(&IoKey {
            phase: phase.to_string(),
            node: Some(node),
            core: Some(core),
        })
    }

    pub fn io_rows(&self) -> Vec<(IoKey, IoStats)> {
        self.io
            .lock()
            .unwrap()
            .iter()
            .map(|(k, c)| (k.clone(), c.snapshot()))
            .collect()
    }

    /// Records a memory peak, keeping the maximum per key.
    pub fn record_mem_peak(&self, phase: &str, label: &str, node: NodeId, core: Option<usize>, bytes: usize) {
        let key = MemKey {
            phase: phase.to_string(),
            label: label.to_string(),
            node,
            core,
        };
        let mut mem = self.mem.lock().unwrap();
        let slot = mem.entry(key).or_insert(0);
        *slot = (*slot).max(bytes);
    }

    pub fn mem_rows(&self) -> Vec<(MemKey, usize)> {
        self.mem
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    /// Largest recorded peak for `(phase, label)` over all nodes and cores.
    pub fn max_mem_peak(&self, phase: &str, label: &str) -> usize {
        self.mem
            .lock()
            .unwrap()
            .iter()
            .filter(|(k, _)| k.phase == phase && k.label == label)
            .map(|(_, v)| *v)
            .max()
            .unwrap_or(0)
    }

    /// Records a phase duration, keeping the slowest node's time.
    pub fn record_time(&self, phase: &str, elapsed: Duration) {
        let mut times = self.times.lock().unwrap();
        let slot = times.entry(phase.to_string()).or_default();
        *slot = (*slot).max(elapsed);
    }

    pub fn times(&self) -> BTreeMap<String, Duration> {
        self.times.lock().unwrap().clone()
    }
}
