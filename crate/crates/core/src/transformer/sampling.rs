use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::Real;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::tokenizer::TokenTable;

/// Redraws allowed before a negative that touches the centric node is accepted anyway.
pub const NEGATIVE_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub centric: u32,
    pub positive: u32,
    pub negative: u32,
}

/// `B` (centric, positive, negative) triplets.
///
/// Positives are uniform edges drawn with replacement. Negatives are uniform
/// nodes that are neither the centric node nor one of its neighbors.
pub fn sample_triplets<R: Rng + ?Sized>(
    g: &SparseGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if g.nnz() == 0 {
        return Err(Error::Sampling("graph has no edges".into()));
    }
    if batch_size == 0 {
        return Err(Error::Sampling("batch size must be positive".into()));
    }
    let n = g.num_nodes() as u32;
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (c, p) = g.entry(rng.random_range(0..g.nnz()));
        let mut neg = rng.random_range(0..n);
        for _ in 0..NEGATIVE_REDRAWS {
            if neg != c && !g.has_edge(c, neg) {
                break;
            }
            neg = rng.random_range(0..n);
        }
        out.push(Triplet {
            centric: c,
            positive: p,
            negative: neg,
        });
    }
    Ok(out)
}

/// Token sequence `(c₁..c_B) ‖ (p₁..p_B) ‖ (n₁..n_B)` with its node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch<T> {
    pub sequence: Array2<T>,
    pub triplets: Vec<Triplet>,
}

impl<T: Real> TokenBatch<T> {
    pub fn gather(tokens: ArrayView2<'_, f64>, triplets: Vec<Triplet>) -> Result<Self> {
        let b = triplets.len();
        let mut sequence = Array2::zeros((3 * b, tokens.ncols()));
        for (slot, node) in Self::ids(&triplets).into_iter().enumerate() {
            if node as usize >= tokens.nrows() {
                return Err(Error::Lookup(node));
            }
            sequence
                .row_mut(slot)
                .assign(&tokens.row(node as usize).mapv(T::lit));
        }
        Ok(Self { sequence, triplets })
    }

    fn ids(triplets: &[Triplet]) -> Vec<u32> {
        triplets
            .iter()
            .map(|t| t.centric)
            .chain(triplets.iter().map(|t| t.positive))
            .chain(triplets.iter().map(|t| t.negative))
            .collect()
    }

    pub fn batch_size(&self) -> usize {
        self.triplets.len()
    }

    /// Node id behind every sequence slot.
    pub fn node_ids(&self) -> Vec<u32> {
        Self::ids(&self.triplets)
    }

    pub fn positive_edges(&self) -> Vec<(u32, u32)> {
        self.triplets.iter().map(|t| (t.centric, t.positive)).collect()
    }
}

pub fn sample_token_batch<T: Real, R: Rng + ?Sized>(
    tokens: &TokenTable,
    g: &SparseGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<TokenBatch<T>> {
    if tokens.embeddings.nrows() != g.num_nodes() {
        return Err(Error::shape(format!(
            "token table has {} rows for {} nodes",
            tokens.embeddings.nrows(),
            g.num_nodes()
        )));
    }
    let triplets = sample_triplets(g, batch_size, rng)?;
    TokenBatch::gather(tokens.embeddings.view(), triplets)
}

/// `count` distinct uniform positions in a sequence of length `len`.
pub fn sample_anchors<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count == 0 || count > len {
        return Err(Error::Config(format!(
            "cannot sample {count} anchors from a sequence of {len}"
        )));
    }
    Ok(rand::seq::index::sample(rng, len, count).into_vec())
}
