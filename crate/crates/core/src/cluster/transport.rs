// SPDX-License-Identifier: Apache-2.0

//! Blocking, bounded, per-channel FIFO message transport between nodes.
//!
//! Every `(sender, receiver, channel)` triple is its own bounded queue, so
//! messages on one channel arrive in send order while different channels
//! interleave freely. End-of-stream sentinels travel on the channel they
//! terminate, which keeps them behind that channel's data.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Select, SendTimeoutError, Sender};
use rand::Rng;

use crate::cluster::barrier::{CancelToken, POLL};
use crate::error::{Error, Result};
use crate::types::NodeId;

/// Per-channel buffering; at least two so all-to-all exchanges cannot
/// deadlock when every node sends before it receives.
pub const CHANNEL_CAPACITY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Shuffle,
    Edges,
    PermuteRequest,
    PermuteReply,
}

const CHANNELS: usize = 4;

impl Channel {
    fn index(self) -> usize {
        match self {
            Channel::Shuffle => 0,
            Channel::Edges => 1,
            Channel::PermuteRequest => 2,
            Channel::PermuteReply => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    ShuffleBlock,
    EdgePacket,
    PermuteRequest,
    PermuteRange,
    EndOfStream,
}

impl MessageKind {
    fn allowed_on(self, channel: Channel) -> bool {
        matches!(
            (self, channel),
            (MessageKind::EndOfStream, _)
                | (MessageKind::ShuffleBlock, Channel::Shuffle)
                | (MessageKind::EdgePacket, Channel::Edges)
                | (MessageKind::PermuteRequest, Channel::PermuteRequest)
                | (MessageKind::PermuteRange, Channel::PermuteReply)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub source: NodeId,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn is_end_of_stream(&self) -> bool {
        self.kind == MessageKind::EndOfStream
    }
}

#[derive(Debug)]
pub struct Transport {
    nodes: usize,
    senders: Vec<Sender<Message>>,
    receivers: Vec<Receiver<Message>>,
    terminated: Vec<AtomicBool>,
    max_packet_bytes: usize,
    jitter_ms: u64,
    watchdog: Duration,
    cancel: Arc<CancelToken>,
}

impl Transport {
    pub fn new(
        nodes: usize,
        max_packet_bytes: usize,
        jitter_ms: u64,
        watchdog: Duration,
        cancel: Arc<CancelToken>,
    ) -> Arc<Self> {
        let (senders, receivers) = (0..nodes * nodes * CHANNELS)
            .map(|_| bounded(CHANNEL_CAPACITY))
            .unzip();
        Arc::new(Transport {
            nodes,
            senders,
            receivers,
            terminated: (0..nodes).map(|_| AtomicBool::new(false)).collect(),
            max_packet_bytes,
            jitter_ms,
            watchdog,
            cancel,
        })
    }

    fn slot(&self, src: NodeId, dst: NodeId, channel: Channel) -> usize {
        (dst * self.nodes + src) * CHANNELS + channel.index()
    }

    pub fn mark_terminated(&self, node: NodeId) {
        self.terminated[node].store(true, Ordering::SeqCst);
    }

    pub fn endpoint(self: &Arc<Self>, node: NodeId) -> Endpoint {
        assert!(node < self.nodes);
        Endpoint {
            node,
            transport: self.clone(),
        }
    }
}

/// One node's view of the transport.
#[derive(Clone, Debug)]
pub struct Endpoint {
    node: NodeId,
    transport: Arc<Transport>,
}

impl Endpoint {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn nodes(&self) -> usize {
        self.transport.nodes
    }

    fn deadline_error(&self, what: String) -> Error {
        Error::Deadlock {
            what,
            secs: self.transport.watchdog.as_secs(),
        }
    }

    /// Blocks until the message is queued for ordered delivery to `dst`.
    /// Sending to self is a local copy through the same queue.
    pub fn send(&self, dst: NodeId, channel: Channel, kind: MessageKind, payload: Vec<u8>) -> Result<()> {
        let t = &*self.transport;
        if dst >= t.nodes {
            return Err(Error::Transport(format!("no such node {dst}")));
        }
        if !kind.allowed_on(channel) {
            return Err(Error::Transport(format!("{kind:?} cannot travel on {channel:?}")));
        }
        if kind == MessageKind::EdgePacket && payload.len() > t.max_packet_bytes {
            return Err(Error::Transport(format!(
                "edge packet of {} bytes exceeds the {}-byte limit",
                payload.len(),
                t.max_packet_bytes
            )));
        }
        if t.terminated[dst].load(Ordering::SeqCst) {
            return Err(Error::Transport(format!(
                "node {} sent {kind:?} to terminated node {dst}",
                self.node
            )));
        }
        if t.jitter_ms > 0 && dst != self.node {
            let delay = rand::rng().random_range(0..=t.jitter_ms * 1000);
            std::thread::sleep(Duration::from_micros(delay));
        }
        let mut msg = Message {
            kind,
            source: self.node,
            payload,
        };
        let tx = &t.senders[t.slot(self.node, dst, channel)];
        let start = Instant::now();
        loop {
            t.cancel.check()?;
            match tx.send_timeout(msg, POLL) {
                Ok(()) => return Ok(()),
                Err(SendTimeoutError::Timeout(m)) => {
                    if t.terminated[dst].load(Ordering::SeqCst) {
                        return Err(Error::Transport(format!(
                            "node {dst} terminated with undelivered {kind:?} from node {}",
                            self.node
                        )));
                    }
                    if start.elapsed() >= t.watchdog {
                        return Err(self.deadline_error(format!(
                            "send {kind:?} {} -> {dst} on {channel:?}",
                            self.node
                        )));
                    }
                    msg = m;
                }
                Err(SendTimeoutError::Disconnected(_)) => {
                    return Err(Error::Transport(format!("channel to node {dst} closed")))
                }
            }
        }
    }

    pub fn send_end_of_stream(&self, dst: NodeId, channel: Channel) -> Result<()> {
        self.send(dst, channel, MessageKind::EndOfStream, Vec::new())
    }

    /// Next message from `src` on `channel`.
    pub fn recv_from(&self, src: NodeId, channel: Channel) -> Result<Message> {
        let t = &*self.transport;
        if src >= t.nodes {
            return Err(Error::Transport(format!("no such node {src}")));
        }
        let rx = &t.receivers[t.slot(src, self.node, channel)];
        let start = Instant::now();
        loop {
            t.cancel.check()?;
            match rx.recv_timeout(POLL) {
                Ok(m) => return Ok(m),
                Err(RecvTimeoutError::Timeout) => {
                    if start.elapsed() >= t.watchdog {
                        return Err(self.deadline_error(format!(
                            "recv on {channel:?} at node {} from {src}",
                            self.node
                        )));
                    }
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport("channel closed".into()))
                }
            }
        }
    }

    /// Next message from any sender on `channel`.
    pub fn recv_any(&self, channel: Channel) -> Result<Message> {
        let t = &*self.transport;
        let rxs: Vec<&Receiver<Message>> = (0..t.nodes)
            .map(|src| &t.receivers[t.slot(src, self.node, channel)])
            .collect();
        let start = Instant::now();
        loop {
            t.cancel.check()?;
            let mut sel = Select::new();
            for rx in &rxs {
                sel.recv(rx);
            }
            match sel.select_timeout(POLL) {
                Ok(op) => {
                    let i = op.index();
                    return op
                        .recv(rxs[i])
                        .map_err(|_| Error::Transport("channel closed".into()));
                }
                Err(_) => {
                    if start.elapsed() >= t.watchdog {
                        return Err(self.deadline_error(format!(
                            "recv on {channel:?} at node {}",
                            self.node
                        )));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn transport(nodes: usize, jitter: u64) -> Arc<Transport> {
        Transport::new(nodes, 1024, jitter, Duration::from_secs(20), Arc::default())
    }

    #[test]
    fn round_trip_and_fifo() {
        let t = transport(2, 0);
        let (a, b) = (t.endpoint(0), t.endpoint(1));
        a.send(1, Channel::Edges, MessageKind::EdgePacket, vec![1, 2, 3]).unwrap();
        a.send(1, Channel::Edges, MessageKind::EdgePacket, vec![4]).unwrap();
        let m1 = b.recv_from(0, Channel::Edges).unwrap();
        let m2 = b.recv_from(0, Channel::Edges).unwrap();
        assert_eq!((m1.source, m1.payload), (0, vec![1, 2, 3]));
        assert_eq!(m2.payload, vec![4]);
    }

    #[test]
    fn all_to_all_counts() {
        let nb = 4;
        let t = transport(nb, 0);
        std::thread::scope(|s| {
            for i in 0..nb {
                let ep = t.endpoint(i);
                s.spawn(move || {
                    for j in (0..nb).filter(|&j| j != i) {
                        ep.send(j, Channel::Shuffle, MessageKind::ShuffleBlock, vec![i as u8]).unwrap();
                    }
                    let mut got = 0;
                    for j in (0..nb).filter(|&j| j != i) {
                        let m = ep.recv_from(j, Channel::Shuffle).unwrap();
                        assert_eq!(m.payload, vec![j as u8]);
                        got += 1;
                    }
                    assert_eq!(got, nb - 1);
                });
            }
        });
    }

    #[test]
    fn rejects_oversized_packets_and_wrong_channel() {
        let t = transport(1, 0);
        let ep = t.endpoint(0);
        assert!(ep
            .send(0, Channel::Edges, MessageKind::EdgePacket, vec![0; 2048])
            .is_err());
        assert!(ep
            .send(0, Channel::Shuffle, MessageKind::EdgePacket, vec![])
            .is_err());
    }

    #[test]
    fn send_to_terminated_node_fails() {
        let t = transport(2, 0);
        t.mark_terminated(1);
        assert!(matches!(
            t.endpoint(0).send(1, Channel::Edges, MessageKind::EdgePacket, vec![]),
            Err(Error::Transport(_))
        ));
    }

    #[test]
    fn recv_times_out() {
        let t = Transport::new(2, 16, 0, Duration::from_millis(60), Arc::default());
        assert!(matches!(
            t.endpoint(0).recv_any(Channel::Edges),
            Err(Error::Deadlock { .. })
        ));
    }

    // Sequence-numbered stress: many senders, random pacing, per-channel order.
    #[test]
    fn fifo_under_random_interleaving() {
        let nb = 4;
        let per_sender = 33_334u32;
        let t = Transport::new(nb, 1024, 0, Duration::from_secs(60), Arc::default());
        std::thread::scope(|s| {
            for src in 1..nb {
                let ep = t.endpoint(src);
                s.spawn(move || {
                    let mut rng = RngStream::new(9, src as u64);
                    for seq in 0..per_sender {
                        if rng.below(1000) == 0 {
                            std::thread::yield_now();
                        }
                        ep.send(0, Channel::Edges, MessageKind::EdgePacket, seq.to_le_bytes().to_vec())
                            .unwrap();
                    }
                    ep.send_end_of_stream(0, Channel::Edges).unwrap();
                });
            }
            let ep = t.endpoint(0);
            let mut next = vec![0u32; nb];
            let mut done = 0;
            while done < nb - 1 {
                let m = ep.recv_any(Channel::Edges).unwrap();
                if m.is_end_of_stream() {
                    assert_eq!(next[m.source], per_sender);
                    done += 1;
                    continue;
                }
                let seq = u32::from_le_bytes(m.payload[..4].try_into().unwrap());
                assert_eq!(seq, next[m.source]);
                next[m.source] += 1;
            }
        });
    }
}
