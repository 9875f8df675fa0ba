// SPDX-License-Identifier: Apache-2.0

//! Distributed random shuffle producing the permutation vector.
//!
//! Each node starts from its own range of identifiers. A round shuffles
//! the local buffer, then splits it into `nb` equal sub-blocks and sends
//! sub-block `j` to node `j`; the received sub-blocks, ordered by sender,
//! become the next buffer. Every round is a permutation of the global
//! multiset, so the concatenated slices stay a bijection on `[0, n)`.

use crate::cluster::{Channel, MessageKind, NodeCtx};
use crate::config::ClusterConfig;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{decode_ids, encode_ids, ID_BYTES};

/// `ceil(log_nb n)`, at least one.
pub fn shuffle_rounds(cfg: &ClusterConfig) -> u32 {
    if cfg.nodes <= 1 {
        return 1;
    }
    let per_round = cfg.nodes.trailing_zeros();
    cfg.scale.div_ceil(per_round).max(1)
}

/// In-place Fisher–Yates shuffle.
pub fn local_shuffle(buf: &mut [u64], rng: &mut RngStream) {
    for i in (1..buf.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        buf.swap(i, j);
    }
}

/// Runs the full shuffle and returns this node's permutation slice.
pub fn distributed_shuffle(ctx: &NodeCtx) -> Result<Vec<u64>> {
    distributed_shuffle_rounds(ctx, shuffle_rounds(ctx.cfg()))
}

/// Runs `rounds` shuffle rounds, then the closing global barrier.
pub fn distributed_shuffle_rounds(ctx: &NodeCtx, rounds: u32) -> Result<Vec<u64>> {
    let cfg = ctx.cfg();
    let bid = ctx.bid();
    let nb = cfg.nodes;
    let bucket = cfg.bucket();
    let part = (bucket / nb as u64) as usize;
    let mut sbuf: Vec<u64> = (bid as u64 * bucket..(bid as u64 + 1) * bucket).collect();
    let mut rbuf = vec![0u64; bucket as usize];
    ctx.metrics()
        .record_mem_peak("shuffle", "buffers", bid, None, 2 * bucket as usize * ID_BYTES);

    for round in 0..rounds {
        let mut rng = RngStream::for_shuffle(cfg.seed, bid, round);
        local_shuffle(&mut sbuf, &mut rng);
        if nb > 1 {
            exchange(ctx, &sbuf, &mut rbuf, part)?;
            std::mem::swap(&mut sbuf, &mut rbuf);
        }
    }
    ctx.global_barrier()?;
    Ok(sbuf)
}

/// One all-to-all exchange: `rbuf[i-th part] = sub-block bid of node i`.
fn exchange(ctx: &NodeCtx, sbuf: &[u64], rbuf: &mut [u64], part: usize) -> Result<()> {
    let bid = ctx.bid();
    let nb = ctx.cfg().nodes;
    let ep = ctx.endpoint();
    std::thread::scope(|s| {
        let sender = s.spawn(|| -> Result<()> {
            for step in 1..nb {
                let j = (bid + step) % nb;
                let block = encode_ids(&sbuf[j * part..(j + 1) * part]);
                ep.send(j, Channel::Shuffle, MessageKind::ShuffleBlock, block)?;
            }
            Ok(())
        });
        rbuf[bid * part..(bid + 1) * part].copy_from_slice(&sbuf[bid * part..(bid + 1) * part]);
        let mut received = Ok(());
        for step in 1..nb {
            let src = (bid + nb - step) % nb;
            let msg = match ep.recv_from(src, Channel::Shuffle) {
                Ok(m) => m,
                Err(e) => {
                    received = Err(e);
                    break;
                }
            };
            if msg.kind != MessageKind::ShuffleBlock || msg.payload.len() != part * ID_BYTES {
                received = Err(Error::Transport(format!(
                    "node {bid} expected a {}-byte shuffle block from node {src}, got {:?} of {} bytes",
                    part * ID_BYTES,
                    msg.kind,
                    msg.payload.len()
                )));
                break;
            }
            rbuf[src * part..(src + 1) * part].copy_from_slice(&decode_ids(&msg.payload));
        }
        if received.is_err() {
            ctx.cancel_token().cancel();
        }
        let sent = sender.join().unwrap_or_else(|_| Err(Error::Corrupt("shuffle sender panicked".into())));
        received.and(sent)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::run_cluster;
    use crate::metrics::Metrics;
    use proptest::prelude::*;

    fn cfg(scale: u32, nodes: usize, seed: u64) -> ClusterConfig {
        ClusterConfig {
            scale,
            nodes,
            seed,
            watchdog_secs: 10,
            ..Default::default()
        }
    }

    fn gathered(cfg: &ClusterConfig, rounds: Option<u32>) -> Vec<u64> {
        run_cluster(cfg, Metrics::new(), |ctx| match rounds {
            Some(r) => distributed_shuffle_rounds(ctx, r),
            None => distributed_shuffle(ctx),
        })
        .unwrap()
        .concat()
    }

    fn is_bijection(pv: &[u64]) -> bool {
        let mut seen = vec![false; pv.len()];
        pv.iter().all(|&v| (v as usize) < seen.len() && !std::mem::replace(&mut seen[v as usize], true))
    }

    #[test]
    fn round_count() {
        assert_eq!(shuffle_rounds(&cfg(10, 1, 1)), 1);
        assert_eq!(shuffle_rounds(&cfg(10, 2, 1)), 10);
        assert_eq!(shuffle_rounds(&cfg(10, 4, 1)), 5);
        assert_eq!(shuffle_rounds(&cfg(9, 4, 1)), 5);
        assert_eq!(shuffle_rounds(&cfg(12, 8, 1)), 4);
    }

    #[test]
    fn length_one_is_unchanged() {
        let mut buf = [42];
        local_shuffle(&mut buf, &mut RngStream::new(1, 1));
        assert_eq!(buf, [42]);
    }

    proptest! {
        #[test]
        fn local_shuffle_rearranges(len in 0usize..200, seed in any::<u64>()) {
            let mut buf: Vec<u64> = (0..len as u64).map(|i| i * 3).collect();
            local_shuffle(&mut buf, &mut RngStream::new(seed, 0));
            let mut sorted = buf.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..len as u64).map(|i| i * 3).collect::<Vec<_>>());
        }
    }

    // Every one of the 24 orders of 4 elements appears within 5 sigma of 1/24.
    #[test]
    fn four_element_orders_are_uniform() {
        let trials = 100_000u64;
        let mut counts = std::collections::HashMap::new();
        let mut rng = RngStream::new(2024, 9);
        for _ in 0..trials {
            let mut buf = [0u64, 1, 2, 3];
            local_shuffle(&mut buf, &mut rng);
            *counts.entry(buf).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 24);
        let p = 1.0 / 24.0;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (order, &c) in &counts {
            assert!((c as f64 - mean).abs() <= 5.0 * sigma, "{order:?}: {c}");
        }
    }

    #[test]
    fn single_node_equals_local_shuffle() {
        let c = cfg(8, 1, 5);
        let mut expect: Vec<u64> = (0..256).collect();
        local_shuffle(&mut expect, &mut RngStream::for_shuffle(5, 0, 0));
        assert_eq!(gathered(&c, None), expect);
    }

    #[test]
    fn bijective_after_every_round() {
        let c = cfg(6, 4, 11);
        for r in 0..=shuffle_rounds(&c) {
            assert!(is_bijection(&gathered(&c, Some(r))), "round {r}");
        }
    }

    #[test]
    fn reruns_are_identical() {
        let c = cfg(10, 4, 3);
        assert_eq!(gathered(&c, None), gathered(&c, None));
    }

    #[test]
    fn jitter_does_not_change_result() {
        let mut c = cfg(8, 4, 3);
        let plain = gathered(&c, None);
        c.jitter_ms = 2;
        assert_eq!(gathered(&c, None), plain);
    }

    // Element 0 lands in each quartile of positions with equal probability.
    #[test]
    fn element_zero_is_mixed_across_quartiles() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let seeds = 10_000u64;
        let mut counts = [0f64; 4];
        for seed in 0..seeds {
            let pv = gathered(&cfg(10, 4, seed), None);
            let pos = pv.iter().position(|&v| v == 0).unwrap();
            counts[pos / 256] += 1.0;
        }
        let expect = seeds as f64 / 4.0;
        let stat: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
        let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi2 {stat} >= {critical}, counts {counts:?}");
    }
}
