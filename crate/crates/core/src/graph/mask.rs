use std::collections::{HashMap, HashSet};

use super::SparseGraph;
use crate::error::{Error, Result};

/// Read-only view of a graph with a set of undirected edges filtered out.
///
/// The underlying CSR is borrowed, never copied.
#[derive(Debug, Clone)]
pub struct MaskedView<'a> {
    graph: &'a SparseGraph,
    masked: HashSet<(u32, u32)>,
    removed_degree: HashMap<u32, usize>,
}

fn key(u: u32, v: u32) -> (u32, u32) {
    (u.min(v), u.max(v))
}

impl<'a> MaskedView<'a> {
    pub fn new(graph: &'a SparseGraph, edges: &[(u32, u32)]) -> Result<Self> {
        let mut masked = HashSet::with_capacity(edges.len());
        let mut removed_degree = HashMap::new();
        for &(u, v) in edges {
            if !graph.has_edge(u, v) {
                return Err(Error::Mask(u, v));
            }
            if masked.insert(key(u, v)) {
                *removed_degree.entry(u).or_insert(0) += 1;
                *removed_degree.entry(v).or_insert(0) += 1;
            }
        }
        Ok(Self {
            graph,
            masked,
            removed_degree,
        })
    }

    pub fn graph(&self) -> &SparseGraph {
        self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn is_masked(&self, u: u32, v: u32) -> bool {
        self.masked.contains(&key(u, v))
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.graph.has_edge(u, v) && !self.is_masked(u, v)
    }

    pub fn neighbors(&self, u: u32) -> impl Iterator<Item = u32> + '_ {
        self.graph
            .neighbors(u)
            .iter()
            .copied()
            .filter(move |&v| !self.is_masked(u, v))
    }

    pub fn degree(&self, u: u32) -> usize {
        self.graph.degree(u) - self.removed_degree.get(&u).copied().unwrap_or(0)
    }

    pub fn degree_vector(&self) -> Vec<usize> {
        (0..self.num_nodes() as u32).map(|u| self.degree(u)).collect()
    }

    /// Materializes the view as a standalone graph.
    pub fn to_graph(&self) -> SparseGraph {
        let edges: Vec<(u32, u32)> = self
            .graph
            .edges()
            .filter(|&(u, v)| !self.is_masked(u, v))
            .collect();
        SparseGraph::from_edges(self.num_nodes(), edges).expect("subset of a valid graph")
    }
}
