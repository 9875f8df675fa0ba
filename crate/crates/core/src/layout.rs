// SPDX-License-Identifier: Apache-2.0

//! File names inside a run's working directory.

use std::path::{Path, PathBuf};

use crate::types::NodeId;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "run.conf";
pub const ERROR_FILE: &str = "error.txt";

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn node_dir(&self, node: NodeId) -> PathBuf {
        self.root.join(format!("n{node}"))
    }

    pub fn core_dir(&self, node: NodeId, core: usize) -> PathBuf {
        self.node_dir(node).join(format!("c{core}"))
    }

    /// Raw generated edges of one core.
    pub fn generated(&self, node: NodeId, core: usize) -> PathBuf {
        self.core_dir(node, core).join("edges.gen.bin")
    }

    /// Edges after relabeling, still in per-core chunks.
    pub fn relabeled(&self, node: NodeId, core: usize) -> PathBuf {
        self.core_dir(node, core).join("edges.relabel.bin")
    }

    /// Relabeled edges with every chunk sorted by new source.
    pub fn src_sorted(&self, node: NodeId, core: usize) -> PathBuf {
        self.core_dir(node, core).join("edges.sorted.bin")
    }

    /// This node's slice of the permutation, as little-endian u64s.
    pub fn perm(&self, node: NodeId) -> PathBuf {
        self.node_dir(node).join("perm.bin")
    }

    pub fn owned(&self, node: NodeId) -> PathBuf {
        self.node_dir(node).join("owned.bin")
    }

    /// Edges received from `sender`, kept as one sorted run.
    pub fn owned_run(&self, node: NodeId, sender: NodeId) -> PathBuf {
        self.node_dir(node).join(format!("owned.run{sender}.bin"))
    }

    pub fn csr(&self, node: NodeId) -> PathBuf {
        self.node_dir(node).join("csr.bin")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn error(&self) -> PathBuf {
        self.root.join(ERROR_FILE)
    }
}
