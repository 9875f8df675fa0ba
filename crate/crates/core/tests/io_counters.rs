// SPDX-License-Identifier: Apache-2.0

//! Block-access counters against the external-memory bounds.

mod common;

use common::*;
use emrmat::metrics::Metrics;
use emrmat::relabel::sweep_phase;
use emrmat::{ClusterConfig, CsrVariant, EdgeField, RedistributeMode};

fn sequential(m: &Metrics, prefix: &str) -> u64 {
    m.phase_io_prefix(prefix).sequential()
}

#[test]
fn generation_writes_ceil_blocks_per_core() {
    for (block_edges, cores) in [(4096, 2), (1000, 4), (7, 1)] {
        let cfg = ClusterConfig {
            block_edges,
            ..config(11, 2, cores, 4)
        };
        let r = run(&cfg);
        let want = cfg.edges_per_core().div_ceil(block_edges as u64);
        for node in 0..cfg.nodes {
            for core in 0..cfg.cores {
                let io = r.report.metrics.core_io("generate", node, core);
                assert_eq!(io.seq_writes, want, "C_e={block_edges} n{node} c{core}");
                assert_eq!(io.random(), 0);
                assert_eq!(io.seq_reads, 0);
            }
        }
    }
}

#[test]
fn relabel_sweep_is_sequential_and_near_two_passes() {
    for block_edges in [4096, 300] {
        let cfg = ClusterConfig {
            block_edges,
            mem_per_core: 1 << 20,
            ..config(13, 2, 2, 9)
        };
        let r = run(&cfg);
        let blocks = cfg.edges_per_core().div_ceil(block_edges as u64) as f64;
        for field in [EdgeField::Des, EdgeField::Src] {
            for node in 0..cfg.nodes {
                for core in 0..cfg.cores {
                    let io = r.report.metrics.core_io(&sweep_phase(field), node, core);
                    assert_eq!(io.random(), 0, "{field} n{node} c{core}");
                    assert!(io.sequential() as f64 <= 1.25 * 2.0 * blocks, "{field}: {io:?} vs {blocks} blocks");
                    assert!(io.sequential() as f64 >= 2.0 * blocks);
                }
            }
        }
    }
}

#[test]
fn sorted_variant_has_no_random_access_after_relabel() {
    let cfg = ClusterConfig {
        block_edges: 512,
        mem_per_core: 1 << 18,
        ..config(13, 4, 2, 2)
    };
    let r = run(&cfg);
    let m = &r.report.metrics;
    assert!(sequential(m, "redistribute") > 0 && sequential(m, "csr") > 0);
    assert_eq!(m.phase_io_prefix("redistribute").random(), 0);
    assert_eq!(m.phase_io_prefix("csr").random(), 0);
}

// The hash builder writes adjacency runs at computed offsets, so it is the
// variant expected to show random writes.
#[test]
fn hash_variant_writes_at_random() {
    let cfg = ClusterConfig {
        csr_variant: CsrVariant::Hash,
        redistribute: RedistributeMode::Unordered,
        block_edges: 64,
        mem_per_core: 1 << 14,
        ..config(12, 2, 2, 2)
    };
    let r = run(&cfg);
    assert!(r.report.metrics.phase_io("csr.edgev").rand_writes > 0);
}

#[test]
fn block_io_doubles_with_scale() {
    let totals: Vec<[u64; 3]> = (12..=14)
        .map(|scale| {
            let r = run(&config(scale, 1, 1, 3));
            let m = &r.report.metrics;
            [sequential(m, "generate"), sequential(m, "relabel"), sequential(m, "csr.sorted")]
        })
        .collect();
    for w in totals.windows(2) {
        for (hi, lo) in w[1].iter().zip(&w[0]) {
            let ratio = *hi as f64 / *lo as f64;
            assert!((1.8..=2.2).contains(&ratio), "{totals:?}");
        }
    }
}
