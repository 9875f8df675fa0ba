// SPDX-License-Identifier: Apache-2.0

//! R-MAT edge sampling.

use crate::config::RmatParams;
use crate::emstore::ExtEdgeList;
use crate::error::Result;
use crate::rng::RngStream;
use crate::types::Edge;

/// Cumulative quadrant thresholds, computed left to right as `a`, `a+b`,
/// `a+b+c`.
#[derive(Clone, Copy, Debug)]
struct Thresholds {
    a: f64,
    ab: f64,
    abc: f64,
}

impl From<&RmatParams> for Thresholds {
    fn from(p: &RmatParams) -> Self {
        Thresholds {
            a: p.a,
            ab: p.a + p.b,
            abc: p.a + p.b + p.c,
        }
    }
}

#[inline]
fn sample(rng: &mut RngStream, scale: u32, t: Thresholds) -> Edge {
    let mut src = 0u64;
    let mut des = 0u64;
    for _ in 0..scale {
        let u = rng.next_f64();
        let (s, d) = if u < t.a {
            (0, 0)
        } else if u < t.ab {
            (0, 1)
        } else if u < t.abc {
            (1, 0)
        } else {
            (1, 1)
        };
        src = (src << 1) | s;
        des = (des << 1) | d;
    }
    Edge { src, des }
}

/// Draws one edge by `scale` recursive quadrant choices, most significant
/// bit first. Consumes exactly `scale` values from `rng`.
pub fn gen_rmat_edge(rng: &mut RngStream, scale: u32, p: &RmatParams) -> Edge {
    assert!(scale >= 1, "scale must be at least 1");
    sample(rng, scale, Thresholds::from(p))
}

/// Appends `count` R-MAT edges to `store`. With `both_orientations` each
/// sampled `(u, v)` is followed by `(v, u)`, so `2 * count` edges land.
pub fn generate_edgelist(
    store: &mut ExtEdgeList,
    count: u64,
    rng: &mut RngStream,
    scale: u32,
    p: &RmatParams,
    both_orientations: bool,
) -> Result<()> {
    assert!(scale >= 1, "scale must be at least 1");
    let t = Thresholds::from(p);
    for _ in 0..count {
        let e = sample(rng, scale, t);
        store.append(e)?;
        if both_orientations {
            store.append(e.reversed())?;
        }
    }
    store.flush()
}
