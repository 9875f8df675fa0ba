// SPDX-License-Identifier: Apache-2.0

//! In-process cluster runtime.
//!
//! `run_cluster` starts one thread per compute node; a node may fan out to
//! one thread per core with [`NodeCtx::run_cores`]. Nodes share nothing but
//! the [`Transport`] and the global barrier. The first failure cancels the
//! run, which releases every blocked barrier and receive.

mod barrier;
mod permute;
mod transport;

use std::sync::{Arc, Mutex};
use std::time::Instant;

pub use barrier::{Barrier, CancelToken};
pub use permute::{get_permute_range, serve_permutation, stop_permute_server};
pub use transport::{Channel, Endpoint, Message, MessageKind, Transport, CHANNEL_CAPACITY};

use crate::config::ClusterConfig;
use crate::emstore::IoSink;
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::types::NodeId;

/// Node-local state that outlives a single phase.
#[derive(Debug, Default)]
pub struct NodeState {
    /// This node's slice of the distributed permutation, once shuffled.
    pub perm: Mutex<Option<Arc<Vec<u64>>>>,
}

/// Everything a node program can reach.
#[derive(Debug)]
pub struct NodeCtx {
    bid: NodeId,
    cfg: Arc<ClusterConfig>,
    endpoint: Endpoint,
    global: Arc<Barrier>,
    cores: Barrier,
    cancel: Arc<CancelToken>,
    metrics: Arc<Metrics>,
    state: NodeState,
}

impl NodeCtx {
    pub fn bid(&self) -> NodeId {
        self.bid
    }

    pub fn cfg(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    pub fn cancel_token(&self) -> &CancelToken {
        &self.cancel
    }

    /// Waits for every node.
    pub fn global_barrier(&self) -> Result<()> {
        self.global.wait(&self.cancel)
    }

    /// I/O sink for node-level work in `phase`.
    pub fn io_sink(&self, phase: &str) -> IoSink {
        self.metrics.sink(phase, self.bid, None)
    }

    pub fn perm(&self) -> Option<Arc<Vec<u64>>> {
        self.state.perm.lock().unwrap().clone()
    }

    pub fn set_perm(&self, perm: Arc<Vec<u64>>) {
        *self.state.perm.lock().unwrap() = Some(perm);
    }

    /// Runs `f` under a phase name: errors are tagged with the phase and
    /// node, and the node's wall time is recorded.
    pub fn phase<T>(&self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| match e {
            e @ Error::Phase { .. } => e,
            e => Error::Phase {
                phase: name.to_string(),
                node: self.bid,
                source: Box::new(e),
            },
        });
        self.metrics.record_time(name, start.elapsed());
        out
    }

    /// Runs `f` on `nc` core threads and collects their results in core
    /// order. A failing core cancels the whole run.
    pub fn run_cores<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&CoreCtx<'_>) -> Result<T> + Sync,
    {
        let nc = self.cfg.cores;
        let results: Vec<Result<T>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..nc)
                .map(|tid| {
                    let f = &f;
                    s.spawn(move || {
                        let core = CoreCtx { tid, node: self };
                        let r = f(&core);
                        if r.is_err() {
                            self.cancel.cancel();
                        }
                        r
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Corrupt("core thread panicked".into()))))
                .collect()
        });
        first_failure(results)
    }
}

/// One core of a node.
#[derive(Debug)]
pub struct CoreCtx<'a> {
    tid: usize,
    node: &'a NodeCtx,
}

impl CoreCtx<'_> {
    pub fn tid(&self) -> usize {
        self.tid
    }

    pub fn node(&self) -> &NodeCtx {
        self.node
    }

    pub fn cfg(&self) -> &ClusterConfig {
        &self.node.cfg
    }

    /// Waits for every core of this node.
    pub fn barrier(&self) -> Result<()> {
        self.node.cores.wait(&self.node.cancel)
    }

    pub fn io_sink(&self, phase: &str) -> IoSink {
        self.node.metrics.sink(phase, self.node.bid, Some(self.tid))
    }
}

/// Picks the root cause: the first error that is not a cancellation echo.
fn first_failure<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    if results.iter().all(Result::is_ok) {
        return Ok(results.into_iter().map(|r| r.ok().unwrap()).collect());
    }
    let mut errors: Vec<Error> = results.into_iter().filter_map(Result::err).collect();
    let root = errors
        .iter()
        .position(|e| !e.is_cancelled())
        .unwrap_or(0);
    Err(errors.swap_remove(root))
}

/// Runs `program` on every node of a fresh simulated cluster and returns
/// the per-node results in node order, or the first fatal error.
pub fn run_cluster<T, F>(cfg: &ClusterConfig, metrics: Arc<Metrics>, program: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&NodeCtx) -> Result<T> + Sync,
{
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let watchdog = cfg.watchdog();
    let cancel = Arc::new(CancelToken::default());
    let transport = Transport::new(
        cfg.nodes,
        cfg.packet_bytes,
        cfg.jitter_ms,
        watchdog,
        cancel.clone(),
    );
    let global = Arc::new(Barrier::new("global", cfg.nodes, watchdog));

    let results: Vec<Result<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.nodes)
            .map(|bid| {
                let ctx = NodeCtx {
                    bid,
                    cfg: cfg.clone(),
                    endpoint: transport.endpoint(bid),
                    global: global.clone(),
                    cores: Barrier::new(format!("cores@{bid}"), cfg.cores, watchdog),
                    cancel: cancel.clone(),
                    metrics: metrics.clone(),
                    state: NodeState::default(),
                };
                let program = &program;
                let transport = &transport;
                let cancel = &cancel;
                s.spawn(move || {
                    let r = program(&ctx);
                    if r.is_err() {
                        cancel.cancel();
                    }
                    transport.mark_terminated(bid);
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Corrupt("node thread panicked".into()))))
            .collect()
    });
    first_failure(results)
}
