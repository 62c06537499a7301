//! Alternative projections used as tokenizer ablations.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Provenance, TokenTable};
use crate::graph::SparseGraph;

/// Rows in the id-indexed table; ids wrap around modulo this size.
pub const ONE_HOT_ROWS: usize = 100_000;
/// Rows in the degree-indexed table; larger degrees share the last row.
pub const DEGREE_TABLE_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    OneHot,
    Degree,
    Random,
}

impl VariantKind {
    pub fn learnable(self) -> bool {
        !matches!(self, VariantKind::Random)
    }
}

/// Table row that `node` reads from under `kind`.
pub fn variant_row(kind: VariantKind, g: &SparseGraph, node: u32) -> usize {
    match kind {
        VariantKind::OneHot => node as usize % ONE_HOT_ROWS,
        VariantKind::Degree => g.degree(node).min(DEGREE_TABLE_ROWS - 1),
        VariantKind::Random => node as usize,
    }
}

/// Embedding table behind an ablation projection.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantTable {
    pub kind: VariantKind,
    pub table: Array2<f64>,
}

fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

impl VariantTable {
    /// Initializes the table. `Random` tables are per node, so they need the graph size.
    pub fn new(kind: VariantKind, num_nodes: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = match kind {
            VariantKind::OneHot => xavier_uniform(ONE_HOT_ROWS, d, &mut rng),
            VariantKind::Degree => xavier_uniform(DEGREE_TABLE_ROWS, d, &mut rng),
            VariantKind::Random => {
                let a = 1.0 / (d as f64).sqrt();
                Array2::from_shape_simple_fn((num_nodes, d), || rng.random_range(-a..a))
            }
        };
        Self { kind, table }
    }

    /// Table row holding the token of `node`.
    pub fn row_index(&self, g: &SparseGraph, node: u32) -> usize {
        variant_row(self.kind, g, node)
    }

    pub fn lookup(&self, g: &SparseGraph, seed: u64) -> TokenTable {
        let n = g.num_nodes();
        let d = self.table.ncols();
        let mut embeddings = Array2::zeros((n, d));
        for u in 0..n as u32 {
            embeddings
                .row_mut(u as usize)
                .assign(&self.table.row(self.row_index(g, u)));
        }
        TokenTable {
            embeddings,
            provenance: Provenance {
                graph_hash: g.structure_hash(),
                seed,
                order: 0,
            },
        }
    }
}

/// Tokens from one of the ablation projections.
pub fn project_variant(g: &SparseGraph, kind: VariantKind, d: usize, seed: u64) -> TokenTable {
    VariantTable::new(kind, g.num_nodes(), d, seed).lookup(g, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_wraps_ids() {
        let g = SparseGraph::from_edges(100_001, [(0, 100_000)]).unwrap();
        let t = project_variant(&g, VariantKind::OneHot, 4, 1);
        assert_eq!(t.row(0), t.row(100_000));
        assert_ne!(t.row(0), t.row(1));
    }

    #[test]
    fn equal_degree_equal_rows() {
        let g = SparseGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let t = project_variant(&g, VariantKind::Degree, 4, 1);
        assert_eq!(t.row(0), t.row(3));
    }

    #[test]
    fn random_is_seeded() {
        let g = SparseGraph::from_edges(10, [(0, 1)]).unwrap();
        let a = project_variant(&g, VariantKind::Random, 8, 5);
        let b = project_variant(&g, VariantKind::Random, 8, 5);
        let c = project_variant(&g, VariantKind::Random, 8, 6);
        assert_eq!(a.embeddings, b.embeddings);
        assert_ne!(a.embeddings, c.embeddings);
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.embeddings.iter().all(|v| v.abs() <= bound));
    }
}
