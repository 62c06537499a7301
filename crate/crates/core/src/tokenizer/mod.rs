//! Topology-aware graph tokenizer.
//!
//! A graph is turned into one `d`-dimensional token per node:
//!
//! ```text
//! Ã = Ā + Ā² + … + Ā^L            (never materialized)
//! P = LN_rows([U·√Λ ‖ V·√Λ])       (truncated SVD of Ã, rank d/2)
//! E = Ã · P
//! ```
//!
//! `Ã` is only ever applied as an operator through repeated sparse products.

mod augment;
mod io;
mod svd;
mod variants;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, SparseGraph};

pub use augment::{class_nodes_augment, features_to_edges};
pub use io::{read_tokens, write_tokens, ProjectorCache};
pub use svd::{fast_svd, randomized_svd, LinearOperator, SmoothedAdjacency, SvdFactors, DEFAULT_OVERSAMPLE};
pub use variants::{
    project_variant, variant_row, VariantKind, VariantTable, DEGREE_TABLE_ROWS, ONE_HOT_ROWS,
};

/// Variance floor used by the projector's row normalization.
pub const LN_EPS: f64 = 1e-8;

/// Default number of subspace iterations for the randomized SVD.
pub const DEFAULT_POWER_ITERS: usize = 2;

/// `(Ā + Ā² + … + Ā^L)·x` via `L` sparse products and a running sum.
pub fn smooth_apply(
    adj: &NormalizedAdjacency,
    x: ArrayView2<'_, f64>,
    order: usize,
) -> Result<Array2<f64>> {
    if order == 0 {
        return Err(Error::InvalidOrder(0));
    }
    let mut power = adj.spmm(x)?;
    let mut acc = power.clone();
    for _ in 1..order {
        power = adj.spmm(power.view())?;
        acc += &power;
    }
    Ok(acc)
}

/// Row-wise layer normalization without affine parameters.
///
/// Rows that are identically zero stay zero.
pub fn layer_norm_rows(m: &mut Array2<f64>, eps: f64) {
    let d = m.ncols() as f64;
    for mut row in m.axis_iter_mut(Axis(0)) {
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv = 1.0 / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
}

/// Topology-aware projection matrix `P` (`num_nodes × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub matrix: Array2<f64>,
    /// Smoothing order the factors were computed under; 0 means identity input.
    pub order: usize,
    pub rank_per_factor: usize,
    pub seed: u64,
}

impl Projector {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Builds `LN_rows([U·√Λ ‖ V·√Λ])`. `d` must be even and equal to twice the rank.
pub fn build_projector(factors: &SvdFactors, d: usize) -> Result<Array2<f64>> {
    if d % 2 != 0 {
        return Err(Error::Dimension(format!("token width {d} must be even")));
    }
    let r = d / 2;
    let (u, lam, v) = (&factors.u, &factors.singular_values, &factors.v);
    if u.ncols() != r || v.ncols() != r || lam.len() != r || u.nrows() != v.nrows() {
        return Err(Error::Dimension(format!(
            "factors have shapes U {:?}, Λ {}, V {:?}; expected rank {r}",
            u.dim(),
            lam.len(),
            v.dim()
        )));
    }
    let n = u.nrows();
    let sqrt_lam = lam.mapv(f64::sqrt);
    let mut p = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for k in 0..r {
            p[[i, k]] = u[[i, k]] * sqrt_lam[k];
            p[[i, r + k]] = v[[i, k]] * sqrt_lam[k];
        }
    }
    layer_norm_rows(&mut p, LN_EPS);
    Ok(p)
}

/// Settings for building a projector over a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub dim: usize,
    /// Smoothing order; 0 feeds the identity matrix instead of `Ã`.
    pub order: usize,
    pub power_iters: usize,
    pub oversample: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            dim: 1024,
            order: 3,
            power_iters: DEFAULT_POWER_ITERS,
            oversample: svd::DEFAULT_OVERSAMPLE,
        }
    }
}

struct IdentityOperator(usize);

impl LinearOperator for IdentityOperator {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(x.to_owned())
    }
    fn apply_transpose(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(x.to_owned())
    }
}

/// Runs the randomized SVD of `Ã` (or of `I` for order 0) and builds the projector.
pub fn projector_for_graph(
    adj: &NormalizedAdjacency,
    cfg: &TokenizerConfig,
    seed: u64,
) -> Result<Projector> {
    let rank = cfg.dim / 2;
    if cfg.dim % 2 != 0 {
        return Err(Error::Dimension(format!("token width {} must be even", cfg.dim)));
    }
    let n = adj.num_nodes();
    let eff = rank.min(n);
    let mut factors = if cfg.order == 0 {
        randomized_svd(&IdentityOperator(n), eff, cfg.power_iters, cfg.oversample, seed)?
    } else {
        let op = SmoothedAdjacency::new(adj, cfg.order)?;
        randomized_svd(&op, eff, cfg.power_iters, cfg.oversample, seed)?
    };
    if eff < rank {
        // Graphs smaller than the rank get zero singular directions.
        let pad = |m: &Array2<f64>| {
            let mut out = Array2::zeros((n, rank));
            out.slice_mut(ndarray::s![.., ..eff]).assign(m);
            out
        };
        let mut lam = ndarray::Array1::zeros(rank);
        lam.slice_mut(ndarray::s![..eff]).assign(&factors.singular_values);
        factors = SvdFactors {
            u: pad(&factors.u),
            singular_values: lam,
            v: pad(&factors.v),
        };
    }
    Ok(Projector {
        matrix: build_projector(&factors, cfg.dim)?,
        order: cfg.order,
        rank_per_factor: rank,
        seed,
    })
}

/// Per-node token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    pub embeddings: Array2<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub graph_hash: String,
    pub seed: u64,
    pub order: usize,
}

impl TokenTable {
    pub fn num_nodes(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn row(&self, node: u32) -> ndarray::ArrayView1<'_, f64> {
        self.embeddings.row(node as usize)
    }
}

/// `E = Ã·P`, or `E = P` for order-0 projectors.
pub fn tokenize_with(adj: &NormalizedAdjacency, p: &Projector, graph_hash: String) -> Result<TokenTable> {
    if p.num_nodes() != adj.num_nodes() {
        return Err(Error::shape(format!(
            "projector covers {} nodes, graph has {}",
            p.num_nodes(),
            adj.num_nodes()
        )));
    }
    let embeddings = if p.order == 0 {
        p.matrix.clone()
    } else {
        smooth_apply(adj, p.matrix.view(), p.order)?
    };
    Ok(TokenTable {
        embeddings,
        provenance: Provenance {
            graph_hash,
            seed: p.seed,
            order: p.order,
        },
    })
}

pub fn tokenize(g: &SparseGraph, p: &Projector) -> Result<TokenTable> {
    tokenize_with(&normalize_adjacency(g), p, g.structure_hash())
}

/// Projector plus tokens for a graph in one call.
pub fn tokenize_graph(g: &SparseGraph, cfg: &TokenizerConfig, seed: u64) -> Result<(Projector, TokenTable)> {
    let adj = normalize_adjacency(g);
    let p = projector_for_graph(&adj, cfg, seed)?;
    let t = tokenize_with(&adj, &p, g.structure_hash())?;
    Ok((p, t))
}
