//! Structural augmentations: feature similarity edges and class nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    i: u32,
    j: u32,
}

impl Candidate {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then((self.i, self.j).cmp(&(other.i, other.j)))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Max-heap on "worse", so the heap top is the weakest kept candidate.
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// Converts node features into similarity edges.
///
/// Nodes with non-zero feature rows are split into consecutive batches of
/// `batch_size`; for each batch every pair `(i, j)` with `i` in the batch and
/// `j ≠ i` is scored by `fᵢᵀfⱼ`, and the best `batch_len × per_node` pairs are
/// kept. Ties break on `(i, j)` ascending. All-zero feature rows never take part.
pub fn features_to_edges(
    features: ArrayView2<'_, f64>,
    batch_size: usize,
    per_node: usize,
) -> Result<Vec<(u32, u32)>> {
    if batch_size == 0 {
        return Err(Error::Config("feature batch size must be positive".into()));
    }
    let active: Vec<u32> = features
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i as u32)
        .collect();
    let mut out = Vec::new();
    for batch in active.chunks(batch_size) {
        let cap = batch.len() * per_node;
        if cap == 0 {
            continue;
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(cap + 1);
        for &i in batch {
            let fi = features.row(i as usize);
            for &j in &active {
                if j == i {
                    continue;
                }
                let c = Candidate {
                    score: fi.dot(&features.row(j as usize)),
                    i,
                    j,
                };
                if heap.len() < cap {
                    heap.push(c);
                } else if c.rank_cmp(heap.peek().expect("heap is full")) == Ordering::Less {
                    heap.pop();
                    heap.push(c);
                }
            }
        }
        let mut kept = heap.into_vec();
        kept.sort_by(Candidate::rank_cmp);
        out.extend(kept.into_iter().map(|c| (c.i, c.j)));
    }
    Ok(out)
}

/// Appends one node per class and links every labeled training node to its
/// class node. Original adjacency rows keep their entries as a prefix.
pub fn class_nodes_augment(
    g: &SparseGraph,
    train_labels: &[(u32, u32)],
    class_count: usize,
) -> Result<SparseGraph> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    let mut extra = Vec::with_capacity(train_labels.len());
    for &(node, class) in train_labels {
        if node as usize >= n {
            return Err(Error::Bounds {
                index: node as u64,
                num_nodes: n,
            });
        }
        if class as usize >= class_count {
            return Err(Error::Bounds {
                index: class as u64,
                num_nodes: class_count,
            });
        }
        if std::mem::replace(&mut seen[node as usize], true) {
            return Err(Error::DuplicateLabel(node));
        }
        extra.push((node, (n + class as usize) as u32));
    }
    let mut out = SparseGraph::from_edges(n + class_count, g.edges().chain(extra))?;
    if let Some(f) = g.features() {
        let mut padded = Array2::zeros((n + class_count, f.ncols()));
        padded.slice_mut(ndarray::s![..n, ..]).assign(f);
        out = out.with_features(padded)?;
    }
    if let (Some(labels), Some(c)) = (g.labels(), g.class_count()) {
        let mut l = labels.to_vec();
        l.resize(n + class_count, None);
        out = out.with_labels(l, c)?;
    }
    Ok(out)
}
