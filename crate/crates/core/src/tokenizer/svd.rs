//! Randomized truncated SVD against matrix-free operators.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::smooth_apply;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::linalg;

/// Extra sketch columns beyond the requested rank.
pub const DEFAULT_OVERSAMPLE: usize = 10;

/// A matrix that can only be multiplied against dense blocks.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A·x`
    fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
    /// `Aᵀ·x`
    fn apply_transpose(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl LinearOperator for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.ncols() {
            return Err(Error::shape("dense operator: operand rows"));
        }
        Ok(self.dot(&x))
    }
    fn apply_transpose(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.nrows() {
            return Err(Error::shape("dense operator: operand rows"));
        }
        Ok(self.t().dot(&x))
    }
}

/// `Ã = Σ_{l=1..L} Ā^l` as an operator. Symmetric, so `apply_transpose == apply`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedAdjacency<'a> {
    adj: &'a NormalizedAdjacency,
    order: usize,
}

impl<'a> SmoothedAdjacency<'a> {
    pub fn new(adj: &'a NormalizedAdjacency, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder(0));
        }
        Ok(Self { adj, order })
    }
}

impl LinearOperator for SmoothedAdjacency<'_> {
    fn nrows(&self) -> usize {
        self.adj.num_nodes()
    }
    fn ncols(&self) -> usize {
        self.adj.num_nodes()
    }
    fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        smooth_apply(self.adj, x, self.order)
    }
    fn apply_transpose(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        smooth_apply(self.adj, x, self.order)
    }
}

/// Truncated factors `A ≈ U diag(s) Vᵀ`, singular values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.singular_values;
        us.dot(&self.v.t())
    }
}

/// Randomized SVD: Gaussian sketch, `power_iters` rounds of orthonormalized
/// subspace iteration, then a small dense SVD of the projected matrix.
pub fn randomized_svd<A: LinearOperator + ?Sized>(
    op: &A,
    rank: usize,
    power_iters: usize,
    oversample: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let (m, n) = (op.nrows(), op.ncols());
    let size = m.min(n);
    if rank > size {
        return Err(Error::Rank { rank, size });
    }
    let k = (rank + oversample).min(size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Array2::from_shape_simple_fn((n, k), || StandardNormal.sample(&mut rng));

    let mut q = linalg::orthonormalize(op.apply(omega.view())?.view())?;
    for _ in 0..power_iters {
        let z = linalg::orthonormalize(op.apply_transpose(q.view())?.view())?;
        q = linalg::orthonormalize(op.apply(z.view())?.view())?;
    }
    // Bᵀ = Aᵀ Q is n × k; its SVD Bᵀ = V_b Σ U_bᵀ gives B = U_b Σ V_bᵀ.
    let bt = op.apply_transpose(q.view())?;
    let (vb, sigma, ub) = linalg::svd(bt.view())?;
    let u = q.dot(&ub.slice(s![.., ..rank]));
    let v = vb.slice(s![.., ..rank]).to_owned();
    let singular_values = sigma.slice(s![..rank]).to_owned();
    if !singular_values.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite singular values".into()));
    }
    Ok(SvdFactors {
        u,
        singular_values,
        v,
    })
}

/// Randomized SVD of the smoothed adjacency `Ã` of order `order`.
pub fn fast_svd(
    adj: &NormalizedAdjacency,
    order: usize,
    rank: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let op = SmoothedAdjacency::new(adj, order)?;
    randomized_svd(&op, rank, power_iters, DEFAULT_OVERSAMPLE, seed)
}
