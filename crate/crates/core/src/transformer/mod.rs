//! Scalable graph transformer with two-stage anchor self-attention.
//!
//! Each layer runs
//!
//! ```text
//! Y  = X + Attn(X)                      anchor (or full) attention, output projection
//! H1 = LN₁(Y)
//! H2 = LN₂(H1 + W₂·relu(W₁·H1 + b₁) + b₂)
//! X' = H2 / K
//! ```
//!
//! Anchor attention routes every token through `S` sampled anchors: anchors
//! first attend over the whole sequence, then every token attends over the
//! refreshed anchors. The same per-head query/key/value weights serve both
//! stages. Gradients are computed by hand; see `layer.rs`.

mod attention;
mod checkpoint;
mod layer;
mod sampling;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attention::{anchor_attention, AttentionCache};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use layer::{forward, forward_inference, gradients, ForwardCache};
pub use sampling::{sample_anchors, sample_token_batch, sample_triplets, TokenBatch, Triplet};

/// Scalar type the transformer runs in (`f32` for training, `f64` for checks).
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Variance floor for every layer normalization in the model.
pub const LN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionKind {
    /// Two-stage attention through sampled anchors.
    Anchor,
    /// Plain quadratic self-attention (ablation).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub anchors: usize,
    /// Per-layer output divisor.
    pub scale: f64,
    pub ffn_dim: usize,
    pub attention: AttentionKind,
}

impl ModelConfig {
    /// `S = d/H`, `d_ff = 2d`, `K = 10`.
    pub fn new(dim: usize, layers: usize, heads: usize) -> Self {
        Self {
            dim,
            layers,
            heads,
            anchors: dim / heads.max(1),
            scale: 10.0,
            ffn_dim: 2 * dim,
            attention: AttentionKind::Anchor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dimension {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.attention == AttentionKind::Anchor && self.anchors == 0 {
            return Err(Error::Config("anchor count must be positive".into()));
        }
        if !(self.scale > 0.0) || self.ffn_dim == 0 {
            return Err(Error::Config("scale and ffn width must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Learnable parameters of one transformer layer.
///
/// Per-head query/key/value matrices are the column blocks of `wq`, `wk`,
/// `wv` (each `d × d`, head `h` owns columns `h·d/H .. (h+1)·d/H`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub wo: Array2<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub ln1_gamma: Array1<T>,
    pub ln1_beta: Array1<T>,
    pub ln2_gamma: Array1<T>,
    pub ln2_beta: Array1<T>,
}

pub(crate) const TENSOR_NAMES: [&str; 12] = [
    "wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2", "ln1_gamma", "ln1_beta", "ln2_gamma",
    "ln2_beta",
];

fn xavier<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-bound..bound)))
}

impl<T: Real> LayerParams<T> {
    pub fn xavier<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        Self {
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
            w1: xavier(d, f, rng),
            b1: Array1::zeros(f),
            w2: xavier(f, d, rng),
            b2: Array1::zeros(d),
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        Self {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
        }
    }

    pub fn tensors(&self) -> [&[T]; 12] {
        [
            self.wq.as_slice().unwrap(),
            self.wk.as_slice().unwrap(),
            self.wv.as_slice().unwrap(),
            self.wo.as_slice().unwrap(),
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.ln1_gamma.as_slice().unwrap(),
            self.ln1_beta.as_slice().unwrap(),
            self.ln2_gamma.as_slice().unwrap(),
            self.ln2_beta.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 12] {
        [
            self.wq.as_slice_mut().unwrap(),
            self.wk.as_slice_mut().unwrap(),
            self.wv.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.ln1_gamma.as_slice_mut().unwrap(),
            self.ln1_beta.as_slice_mut().unwrap(),
            self.ln2_gamma.as_slice_mut().unwrap(),
            self.ln2_beta.as_slice_mut().unwrap(),
        ]
    }

    fn shapes(cfg: &ModelConfig) -> [Vec<usize>; 12] {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        [
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d],
            vec![d],
        ]
    }
}

/// All learnable transformer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel<T> {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> TransformerModel<T> {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|_| LayerParams::xavier(&config, rng))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            layers: (0..self.layers.len())
                .map(|_| LayerParams::zeros(&self.config))
                .collect(),
        }
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let shapes = LayerParams::<T>::shapes(&self.config);
        let mut out = Vec::with_capacity(12 * self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            for ((name, shape), t) in TENSOR_NAMES.iter().zip(shapes.iter()).zip(layer.tensors()) {
                out.push((format!("layers.{l}.{name}"), shape.clone(), t));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// `Σ θ²` over every parameter.
    pub fn squared_norm(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .flat_map(|t| t.iter())
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Copies the model into another precision.
    pub fn cast<U: Real>(&self) -> TransformerModel<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::lit(v.to_f64().unwrap()));
        let c2 = |a: &Array2<T>| a.mapv(|v| U::lit(v.to_f64().unwrap()));
        TransformerModel {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    wq: c2(&l.wq),
                    wk: c2(&l.wk),
                    wv: c2(&l.wv),
                    wo: c2(&l.wo),
                    w1: c2(&l.w1),
                    b1: c1(&l.b1),
                    w2: c2(&l.w2),
                    b2: c1(&l.b2),
                    ln1_gamma: c1(&l.ln1_gamma),
                    ln1_beta: c1(&l.ln1_beta),
                    ln2_gamma: c1(&l.ln2_gamma),
                    ln2_beta: c1(&l.ln2_beta),
                })
                .collect(),
        }
    }
}

/// Dot-product link scores `e_uᵀ e_v` for the requested pairs.
pub fn link_scores(emb: ArrayView2<'_, f64>, pairs: &[(u32, u32)]) -> Result<Vec<f64>> {
    let n = emb.nrows();
    pairs
        .iter()
        .map(|&(u, v)| {
            for x in [u, v] {
                if x as usize >= n {
                    return Err(Error::Lookup(x));
                }
            }
            Ok(emb.row(u as usize).dot(&emb.row(v as usize)))
        })
        .collect()
}

/// Converts an `f64` block into the model precision.
pub fn to_precision<T: Real>(x: ArrayView2<'_, f64>) -> Array2<T> {
    x.mapv(T::lit)
}

pub fn to_f64<T: Real>(x: ArrayView2<'_, T>) -> Array2<f64> {
    x.mapv(|v| v.to_f64().unwrap())
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn defaults_follow_head_count() {
        let c = ModelConfig::new(1024, 3, 4);
        assert_eq!(c.anchors, 256);
        assert_eq!(c.ffn_dim, 2048);
        assert_eq!(c.scale, 10.0);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let c = ModelConfig::new(10, 1, 3);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn link_score_cases() {
        let e = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(link_scores(e.view(), &[(0, 1), (0, 2)]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(link_scores(e.view(), &[(0, 5)]), Err(Error::Lookup(5))));
    }

    #[test]
    fn link_scores_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Array2::from_shape_simple_fn((12, 5), || rng.random::<f64>() - 0.5);
        let pairs: Vec<(u32, u32)> = (0..10)
            .map(|_| (rng.random_range(0..12), rng.random_range(0..12)))
            .collect();
        let got = link_scores(e.view(), &pairs).unwrap();
        for (k, &(u, v)) in pairs.iter().enumerate() {
            let mut s = 0.0;
            for c in 0..5 {
                s += e[[u as usize, c]] * e[[v as usize, c]];
            }
            assert_eq!(got[k], s);
        }
    }

    #[test]
    fn named_tensors_cover_all_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = TransformerModel::<f64>::new(ModelConfig::new(8, 2, 2), &mut rng).unwrap();
        let names = m.named_tensors();
        assert_eq!(names.len(), 24);
        assert_eq!(names[0].0, "layers.0.wq");
        let total: usize = names.iter().map(|(_, s, _)| s.iter().product::<usize>()).sum();
        assert_eq!(total, m.num_parameters());
        let back = m.cast::<f32>().cast::<f64>();
        assert!(m
            .named_tensors()
            .iter()
            .zip(back.named_tensors())
            .all(|(a, b)| a.2.iter().zip(b.2).all(|(x, y)| (x - y).abs() < 1e-6)));
    }
}
