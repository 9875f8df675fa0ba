// SPDX-License-Identifier: Apache-2.0

//! Scale-3 run against a trace computed by an independent implementation
//! (`golden/make_trace.py`).

mod common;

use common::*;
use emrmat::Edge;

fn field(key: &str) -> String {
    golden_trace()
        .into_iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("trace lacks {key}"))
        .1
}

fn ids(key: &str) -> Vec<u64> {
    field(key).split(',').map(|s| s.parse().unwrap()).collect()
}

fn edges(key: &str) -> Vec<Edge> {
    field(key)
        .split(',')
        .map(|p| {
            let (s, d) = p.split_once(':').unwrap();
            Edge::new(s.parse().unwrap(), d.parse().unwrap())
        })
        .collect()
}

#[test]
fn artifacts_match_golden_bytes() {
    let r = run(&golden_config());
    assert_eq!(check_golden(r.dir.path()), Ok(5));
}

#[test]
fn oracle_matches_golden_trace() {
    let o = oracle(&golden_config());
    assert_eq!(o.pv, ids("perm"));
    assert_eq!(o.generated, edges("generated"));
    assert_eq!(sorted(o.relabeled.clone()), sorted(edges("relabeled")));
    assert_eq!(o.csr.offv, ids("offv"));
    assert_eq!(o.csr.canonical().adjv, {
        let mut c = o.csr.clone();
        c.adjv = ids("adjv");
        c.canonical().adjv
    });
}

#[test]
fn run_csr_matches_trace_arrays() {
    let r = run(&golden_config());
    let csr = node_csr(r.dir.path(), 0);
    assert_eq!(csr.offv, ids("offv"));
    assert_eq!(csr.adjv, ids("adjv"));
    assert_eq!(owned_edges(r.dir.path(), 0), edges("owned"));
}
