//! Masked link-prediction pretraining over one or more graphs.

mod adam;
mod trainer;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{MaskedView, SparseGraph};
use crate::tokenizer::{TokenizerConfig, VariantKind, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};
use crate::transformer::{AttentionKind, ModelConfig, Real};

pub use adam::Adam;
pub use trainer::{derive_seed, embed_nodes, LossRecord, TrainedModel, Trainer};

/// Where node tokens come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenSource {
    /// Topology-aware projection (order 0 gives the identity-input variant).
    Projection,
    OneHot,
    Degree,
    Random,
}

impl TokenSource {
    pub fn variant(self) -> Option<VariantKind> {
        match self {
            TokenSource::Projection => None,
            TokenSource::OneHot => Some(VariantKind::OneHot),
            TokenSource::Degree => Some(VariantKind::Degree),
            TokenSource::Random => Some(VariantKind::Random),
        }
    }
}

/// What the transformer sees at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceMode {
    /// `3B` tokens for the sampled triplets.
    Sampled,
    /// Every node of the graph at once.
    FullGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub dim: usize,
    /// Tokenizer smoothing order `L`.
    pub order: usize,
    /// Transformer depth `L'`.
    pub layers: usize,
    pub heads: usize,
    pub anchors: usize,
    pub scale: f64,
    pub ffn_dim: Option<usize>,
    pub projector_refresh_every: u64,
    pub max_steps: u64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only at the end.
    pub checkpoint_every: u64,
    pub attention: AttentionKind,
    pub tokens: TokenSource,
    pub sequence: SequenceMode,
    /// Recompute tokens on the masked graph every step.
    pub strict_mae: bool,
    pub power_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            l2_lambda: 1e-6,
            batch_size: 1024,
            dim: 1024,
            order: 3,
            layers: 3,
            heads: 4,
            anchors: 256,
            scale: 10.0,
            ffn_dim: None,
            projector_refresh_every: 10,
            max_steps: 1000,
            seed: 0,
            checkpoint_every: 0,
            attention: AttentionKind::Anchor,
            tokens: TokenSource::Projection,
            sequence: SequenceMode::Sampled,
            strict_mae: false,
            power_iters: DEFAULT_POWER_ITERS,
        }
    }
}

impl TrainConfig {
    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return bad("l2_lambda must be non-negative");
        }
        if self.batch_size == 0 || self.dim == 0 || self.heads == 0 || self.anchors == 0 {
            return bad("batch_size, dim, heads and anchors must be positive");
        }
        if self.projector_refresh_every == 0 {
            return bad("projector_refresh_every must be positive");
        }
        if self.dim % 2 != 0 {
            return bad("dim must be even");
        }
        if self.sequence == SequenceMode::Sampled
            && self.attention == AttentionKind::Anchor
            && self.anchors > 3 * self.batch_size
        {
            return bad("anchors must not exceed the sequence length 3B");
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            anchors: self.anchors,
            scale: self.scale,
            ffn_dim: self.ffn_dim.unwrap_or(2 * self.dim),
            attention: self.attention,
        }
    }

    pub fn tokenizer_config(&self) -> TokenizerConfig {
        TokenizerConfig {
            dim: self.dim,
            order: self.order,
            power_iters: self.power_iters,
            oversample: DEFAULT_OVERSAMPLE,
        }
    }
}

/// Hides the batch's positive edges (both directions).
pub fn mask_edges<'a>(g: &'a SparseGraph, batch_edges: &[(u32, u32)]) -> Result<MaskedView<'a>> {
    MaskedView::new(g, batch_edges)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row positions of each triplet inside the transformer output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletRows {
    pub centric: Vec<usize>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl TripletRows {
    /// Layout of a sampled `3B` sequence.
    pub fn stacked(b: usize) -> Self {
        Self {
            centric: (0..b).collect(),
            positive: (b..2 * b).collect(),
            negative: (2 * b..3 * b).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.centric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centric.is_empty()
    }
}

/// Mean of `softplus(s(c,n) − s(c,p))` and its gradient with respect to the output rows.
pub fn pairwise_link_loss<T: Real>(out: ArrayView2<'_, T>, rows: &TripletRows) -> (f64, Array2<T>) {
    let b = rows.len();
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    for i in 0..b {
        let (c, p, n) = (rows.centric[i], rows.positive[i], rows.negative[i]);
        let (ec, ep, en) = (out.row(c), out.row(p), out.row(n));
        let sp = ec.dot(&ep).to_f64().unwrap();
        let sn = ec.dot(&en).to_f64().unwrap();
        let margin = sn - sp;
        loss += softplus(margin);
        let w = T::lit(sigmoid(margin) / b as f64);
        let dc = (&en - &ep).mapv(|v| v * w);
        let dp = ec.mapv(|v| -v * w);
        let dn = ec.mapv(|v| v * w);
        let mut r = grad.row_mut(c);
        r += &dc;
        let mut r = grad.row_mut(p);
        r += &dp;
        let mut r = grad.row_mut(n);
        r += &dn;
    }
    (loss / b as f64, grad)
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.dim, c.anchors, c.batch_size, c.layers, c.heads), (1024, 256, 1024, 3, 4));
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.l2_lambda, 1e-6);
        assert_eq!(c.projector_refresh_every, 10);
        c.validate().unwrap();
    }

    #[test]
    fn config_from_toml_and_json() {
        let tmp = tempfile::tempdir().unwrap();
        let t = tmp.path().join("c.toml");
        std::fs::write(&t, "dim = 16\nanchors = 4\nbatch_size = 8\nattention = \"full\"\n").unwrap();
        let c = TrainConfig::from_file(&t).unwrap();
        assert_eq!((c.dim, c.anchors, c.attention), (16, 4, AttentionKind::Full));
        let j = tmp.path().join("c.json");
        std::fs::write(&j, r#"{"dim": 16, "anchors": 4, "tokens": "one-hot"}"#).unwrap();
        assert_eq!(TrainConfig::from_file(&j).unwrap().tokens, TokenSource::OneHot);
        std::fs::write(&t, "dimension = 3\n").unwrap();
        assert!(matches!(TrainConfig::from_file(&t), Err(Error::Config(_))));
    }

    #[test]
    fn too_many_anchors_rejected() {
        let c = TrainConfig {
            batch_size: 2,
            anchors: 7,
            dim: 8,
            heads: 2,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn mask_cases() {
        let k2 = SparseGraph::from_edges(2, [(0, 1)]).unwrap();
        let m = mask_edges(&k2, &[(1, 0)]).unwrap();
        assert_eq!(m.degree_vector(), vec![0, 0]);
        assert_eq!(k2.num_edges(), 1);
        let tri = SparseGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(mask_edges(&tri, &[(0, 1)]).unwrap().degree_vector(), vec![1, 1, 2]);
        assert_eq!(mask_edges(&tri, &[]).unwrap().degree_vector(), vec![2, 2, 2]);
        assert!(matches!(mask_edges(&k2, &[(0, 0)]), Err(Error::Mask(0, 0))));
    }

    #[test]
    fn zero_outputs_give_ln2() {
        let out = Array2::<f64>::zeros((6, 4));
        let (loss, grad) = pairwise_link_loss(out.view(), &TripletRows::stacked(2));
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_matches_direct_formula_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = Array2::from_shape_simple_fn((9, 4), || rng.random::<f64>() - 0.5);
        let rows = TripletRows::stacked(3);
        let (loss, grad) = pairwise_link_loss(out.view(), &rows);
        let f = |o: &Array2<f64>| {
            (0..3)
                .map(|i| {
                    let s = |a: usize, b: usize| (0..4).map(|k| o[[a, k]] * o[[b, k]]).sum::<f64>();
                    (1.0 + (s(i, 6 + i) - s(i, 3 + i)).exp()).ln()
                })
                .sum::<f64>()
                / 3.0
        };
        assert!((loss - f(&out)).abs() < 1e-14);
        let h = 1e-6;
        for i in 0..9 {
            for k in 0..4 {
                let mut p = out.clone();
                p[[i, k]] += h;
                let mut m = out.clone();
                m[[i, k]] -= h;
                assert!(((f(&p) - f(&m)) / (2.0 * h) - grad[[i, k]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert_eq!(sigmoid(-1000.0), 0.0);
        let _ = array![1.0];
    }
}
