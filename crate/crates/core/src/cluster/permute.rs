// SPDX-License-Identifier: Apache-2.0

//! The permute server: each node answers requests for its permutation slice.

use std::sync::Arc;

use crate::cluster::transport::{Channel, Endpoint, MessageKind};
use crate::cluster::NodeCtx;
use crate::error::{Error, Result};
use crate::types::{decode_ids, encode_ids, NodeId};

/// Serves `slice` to any requesting node until this node sends itself an
/// end-of-stream on the request channel. Idling is not a deadlock: the
/// server outlives watchdog ticks and exits only on stop or cancellation.
pub fn serve_permutation(ep: &Endpoint, slice: &[u64]) -> Result<usize> {
    let payload = encode_ids(slice);
    let mut served = 0;
    loop {
        let req = match ep.recv_any(Channel::PermuteRequest) {
            Err(Error::Deadlock { .. }) => continue,
            r => r?,
        };
        match req.kind {
            MessageKind::EndOfStream if req.source == ep.node() => return Ok(served),
            MessageKind::PermuteRequest => {
                ep.send(
                    req.source,
                    Channel::PermuteReply,
                    MessageKind::PermuteRange,
                    payload.clone(),
                )?;
                served += 1;
            }
            other => {
                return Err(Error::Transport(format!(
                    "permute server got unexpected {other:?} from node {}",
                    req.source
                )))
            }
        }
    }
}

pub fn stop_permute_server(ep: &Endpoint) -> Result<()> {
    ep.send_end_of_stream(ep.node(), Channel::PermuteRequest)
}

/// Fetches node `s`'s permutation slice; the local slice skips the transport.
pub fn get_permute_range(ctx: &NodeCtx, s: NodeId) -> Result<Arc<Vec<u64>>> {
    let local = ctx.perm().ok_or_else(|| {
        Error::PhaseOrder(format!(
            "node {} requested permutation range {s} before the shuffle completed",
            ctx.bid()
        ))
    })?;
    if s == ctx.bid() {
        return Ok(local);
    }
    let ep = ctx.endpoint();
    ep.send(s, Channel::PermuteRequest, MessageKind::PermuteRequest, Vec::new())?;
    let reply = ep.recv_from(s, Channel::PermuteReply)?;
    if reply.kind != MessageKind::PermuteRange {
        return Err(Error::Transport(format!(
            "expected a permutation range from node {s}, got {:?}",
            reply.kind
        )));
    }
    let ids = decode_ids(&reply.payload);
    if ids.len() as u64 != ctx.cfg().bucket() {
        return Err(Error::Corrupt(format!(
            "permutation range from node {s} has {} entries, expected {}",
            ids.len(),
            ctx.cfg().bucket()
        )));
    }
    Ok(Arc::new(ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::run_cluster;
    use crate::config::ClusterConfig;
    use crate::metrics::Metrics;

    fn cfg(nodes: usize) -> ClusterConfig {
        ClusterConfig {
            scale: 4,
            nodes,
            watchdog_secs: 5,
            ..Default::default()
        }
    }

    // Every node serves a distinct slice; everyone fetches everyone.
    #[test]
    fn ranges_concatenate_to_served_slices() {
        let nb = 4;
        let out = run_cluster(&cfg(nb), Metrics::new(), |ctx| {
            let b = ctx.cfg().bucket();
            let slice: Vec<u64> = (0..b).map(|i| ctx.bid() as u64 * b + (b - 1 - i)).collect();
            ctx.set_perm(Arc::new(slice.clone()));
            ctx.global_barrier()?;
            let served_slice = &slice;
            let (fetched, served) = std::thread::scope(|s| {
                let server = s.spawn(move || serve_permutation(ctx.endpoint(), served_slice));
                let fetched = (0..nb)
                    .map(|r| get_permute_range(ctx, r).map(|v| (*v).clone()))
                    .collect::<Result<Vec<_>>>();
                let done = ctx.global_barrier();
                stop_permute_server(ctx.endpoint())?;
                let served = server.join().unwrap()?;
                done?;
                Ok::<_, Error>((fetched?, served))
            })?;
            Ok((fetched, served, slice))
        })
        .unwrap();
        let slices: Vec<Vec<u64>> = out.iter().map(|(_, _, s)| s.clone()).collect();
        for (fetched, served, _) in &out {
            assert_eq!(fetched, &slices);
            assert_eq!(*served, nb - 1);
        }
    }

    #[test]
    fn concurrent_requesters_get_identical_payloads() {
        let out = run_cluster(&cfg(4), Metrics::new(), |ctx| {
            let slice: Vec<u64> = (0..ctx.cfg().bucket()).map(|i| i * 7 + ctx.bid() as u64).collect();
            ctx.set_perm(Arc::new(slice.clone()));
            ctx.global_barrier()?;
            let slice = &slice;
            std::thread::scope(|s| {
                let server = s.spawn(move || serve_permutation(ctx.endpoint(), slice));
                let got = if ctx.bid() != 0 {
                    Some(get_permute_range(ctx, 0)?)
                } else {
                    None
                };
                ctx.global_barrier()?;
                stop_permute_server(ctx.endpoint())?;
                server.join().unwrap()?;
                Ok(got)
            })
        })
        .unwrap();
        let payloads: Vec<_> = out.into_iter().flatten().collect();
        assert_eq!(payloads.len(), 3);
        assert!(payloads.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn request_before_shuffle_is_phase_order_fault() {
        let err = run_cluster(&cfg(1), Metrics::new(), |ctx| get_permute_range(ctx, 0)).unwrap_err();
        assert!(matches!(err, Error::PhaseOrder(_)));
    }
}
