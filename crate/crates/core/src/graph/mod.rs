//! Sparse undirected graph storage shared by every other module.
//!
//! Graphs are stored in CSR form with both directions of each undirected edge
//! present, strictly increasing column indices per row and no self-loops.

mod io;
mod mask;
mod norm;


use ndarray::Array2;

use crate::error::{Error, Result};

pub use io::{
    load_edge_list, read_dataset, read_features, save_edge_list, write_dataset, write_features,
    Dataset, DatasetMeta, InputFormat, LoadedGraph,
};
pub use mask::MaskedView;
pub use norm::NormalizedAdjacency;

/// Immutable CSR graph with optional node features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    features: Option<Array2<f64>>,
    labels: Option<Vec<Option<u32>>>,
    class_count: Option<usize>,
}

impl SparseGraph {
    /// Builds a graph from undirected edges. Duplicates (in either direction)
    /// collapse to one edge and self-loops are dropped.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            for x in [u, v] {
                if x as usize >= num_nodes {
                    return Err(Error::Bounds {
                        index: x as u64,
                        num_nodes,
                    });
                }
            }
            if u == v {
                continue;
            }
            pairs.push((u, v));
            pairs.push((v, u));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let indices = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(Self {
            num_nodes,
            offsets,
            indices,
            features: None,
            labels: None,
            class_count: None,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            offsets: vec![0; num_nodes + 1],
            indices: Vec::new(),
            features: None,
            labels: None,
            class_count: None,
        }
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes {
            return Err(Error::shape(format!(
                "feature matrix has {} rows, graph has {} nodes",
                features.nrows(),
                self.num_nodes
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Option<u32>>, class_count: usize) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        if let Some(c) = labels.iter().flatten().find(|&&c| c as usize >= class_count) {
            return Err(Error::Bounds {
                index: *c as u64,
                num_nodes: class_count,
            });
        }
        self.labels = Some(labels);
        self.class_count = Some(class_count);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    /// Number of stored (directed) CSR entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let n = node as usize;
        &self.indices[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn degree(&self, node: u32) -> usize {
        let n = node as usize;
        self.offsets[n + 1] - self.offsets[n]
    }

    pub fn degree_vector(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        (u as usize) < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Source and target of the `entry`-th CSR entry.
    pub fn entry(&self, entry: usize) -> (u32, u32) {
        let row = self.offsets.partition_point(|&o| o <= entry) - 1;
        (row as u32, self.indices[entry])
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_nodes as u32).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[Option<u32>]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> Option<usize> {
        self.class_count
    }

    /// Returns a copy of this graph with `extra` undirected edges added.
    pub fn with_extra_edges<I>(&self, extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut g = Self::from_edges(self.num_nodes, self.edges().chain(extra))?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        g.class_count = self.class_count;
        Ok(g)
    }

    /// Subgraph induced by `keep` (sorted or not), reindexed in the given order.
    pub fn induced_subgraph(&self, keep: &[u32]) -> Result<Self> {
        let mut new_id = vec![u32::MAX; self.num_nodes];
        for (i, &old) in keep.iter().enumerate() {
            new_id[old as usize] = i as u32;
        }
        let edges: Vec<(u32, u32)> = self
            .edges()
            .filter_map(|(u, v)| {
                let (a, b) = (new_id[u as usize], new_id[v as usize]);
                (a != u32::MAX && b != u32::MAX).then_some((a, b))
            })
            .collect();
        Self::from_edges(keep.len(), edges)
    }

    /// Dense 0/1 adjacency; intended for small graphs and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for u in 0..self.num_nodes as u32 {
            for &v in self.neighbors(u) {
                a[[u as usize, v as usize]] = 1.0;
            }
        }
        a
    }

    /// Content hash over the CSR structure, used to key projector caches.
    pub fn structure_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.num_nodes as u64).to_le_bytes());
        for &o in &self.offsets {
            h.update((o as u64).to_le_bytes());
        }
        for &i in &self.indices {
            h.update(i.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    #[cfg(test)]
    pub(crate) fn check_invariants(&self) -> bool {
        if self.offsets.len() != self.num_nodes + 1 {
            return false;
        }
        let mut set = std::collections::BTreeSet::new();
        for u in 0..self.num_nodes as u32 {
            let nb = self.neighbors(u);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &v in nb {
                if v as usize >= self.num_nodes || v == u {
                    return false;
                }
                set.insert((u, v));
            }
        }
        set.iter().all(|&(u, v)| set.contains(&(v, u)))
    }
}

/// Per-node undirected degree.
pub fn degree_vector(g: &SparseGraph) -> Vec<usize> {
    g.degree_vector()
}

/// Symmetric normalization `D^{-1/2} A D^{-1/2}`.
pub fn normalize_adjacency(g: &SparseGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_graph(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn star(leaves: u32) -> SparseGraph {
        SparseGraph::from_edges(leaves as usize + 1, (1..=leaves).map(|l| (0, l))).unwrap()
    }

    #[test]
    fn path_graph_has_four_entries() {
        let g = SparseGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.nnz(), 4);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.check_invariants());
    }

    #[test]
    fn duplicates_and_reversals_collapse() {
        let g = SparseGraph::from_edges(2, [(0, 1), (0, 1), (1, 0)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn self_loops_are_dropped() {
        let g = SparseGraph::from_edges(2, [(0, 0), (0, 1)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn out_of_range_edge_is_bounds_error() {
        let err = SparseGraph::from_edges(2, [(0, 2)]).unwrap_err();
        assert!(matches!(err, Error::Bounds { index: 2, num_nodes: 2 }));
    }

    #[test]
    fn degrees() {
        let k2 = SparseGraph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(degree_vector(&k2), vec![1, 1]);
        assert_eq!(degree_vector(&star(4)), vec![4, 1, 1, 1, 1]);
    }

    #[test]
    fn entry_lookup_matches_csr() {
        let g = star(3);
        for e in 0..g.nnz() {
            let (u, v) = g.entry(e);
            assert!(g.has_edge(u, v));
        }
        assert_eq!(g.entry(0), (0, 1));
        assert_eq!(g.entry(3), (1, 0));
    }

    #[test]
    fn induced_subgraph_reindexes() {
        let g = SparseGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = g.induced_subgraph(&[1, 2, 3]).unwrap();
        assert_eq!(s.num_nodes(), 3);
        assert_eq!(s.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }
}
