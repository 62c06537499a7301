use ndarray::{s, Array2, ArrayView2, Axis};

use super::{AttentionKind, LayerParams, Real};
use crate::error::{Error, Result};

/// Values saved by one multi-head attention pass `softmax(QKᵀ/√dₕ)·V`.
#[derive(Debug, Clone)]
pub(crate) struct MhaCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Row-stochastic weights, one `m × s` block per head.
    pub(crate) weights: Vec<Array2<T>>,
    /// Concatenated head outputs.
    pub(crate) z: Array2<T>,
}

fn softmax_rows<T: Real>(logits: &mut Array2<T>, layer: usize) -> Result<()> {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        if !max.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogits { layer });
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(())
}

/// Queries come from `xq`, keys and values from `xs`.
pub(crate) fn mha_forward<T: Real>(
    xq: ArrayView2<'_, T>,
    xs: ArrayView2<'_, T>,
    p: &LayerParams<T>,
    heads: usize,
    layer: usize,
) -> Result<MhaCache<T>> {
    let q = xq.dot(&p.wq);
    let k = xs.dot(&p.wk);
    let v = xs.dot(&p.wv);
    let d = q.ncols();
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut z = Array2::zeros((xq.nrows(), d));
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut a = q.slice(cols).dot(&k.slice(cols).t());
        a.mapv_inplace(|x| x * scale);
        softmax_rows(&mut a, layer)?;
        z.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        weights.push(a);
    }
    Ok(MhaCache { q, k, v, weights, z })
}

/// Accumulates weight gradients into `g`; returns `(∂xq, ∂xs)`.
pub(crate) fn mha_backward<T: Real>(
    dz: ArrayView2<'_, T>,
    xq: ArrayView2<'_, T>,
    xs: ArrayView2<'_, T>,
    c: &MhaCache<T>,
    p: &LayerParams<T>,
    g: &mut LayerParams<T>,
) -> (Array2<T>, Array2<T>) {
    let heads = c.weights.len();
    let d = c.q.ncols();
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for (h, a) in c.weights.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dzh = dz.slice(cols);
        let mut dl = dzh.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dzh));
        for (mut drow, arow) in dl.rows_mut().into_iter().zip(a.rows()) {
            let inner = drow.dot(&arow);
            drow.zip_mut_with(&arow, |x, &w| *x = w * (*x - inner) * scale);
        }
        dq.slice_mut(cols).assign(&dl.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&dl.t().dot(&c.q.slice(cols)));
    }
    g.wq += &xq.t().dot(&dq);
    g.wk += &xs.t().dot(&dk);
    g.wv += &xs.t().dot(&dv);
    let dxq = dq.dot(&p.wq.t());
    let mut dxs = dk.dot(&p.wk.t());
    dxs += &dv.dot(&p.wv.t());
    (dxq, dxs)
}

/// Saved state of one attention block.
#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub(crate) anchors: Vec<usize>,
    pub(crate) stages: Stages<T>,
}

#[derive(Debug, Clone)]
pub(crate) enum Stages<T> {
    Anchor {
        xa: Array2<T>,
        first: MhaCache<T>,
        second: MhaCache<T>,
    },
    Full(MhaCache<T>),
}

impl<T: Real> AttentionCache<T> {
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    /// Attention weight blocks of every stage and head.
    pub fn weights(&self) -> Vec<&Array2<T>> {
        match &self.stages {
            Stages::Anchor { first, second, .. } => {
                first.weights.iter().chain(second.weights.iter()).collect()
            }
            Stages::Full(c) => c.weights.iter().collect(),
        }
    }

    /// Anchor embeddings after the first stage (anchor mode only).
    pub fn anchor_embeddings(&self) -> Option<&Array2<T>> {
        match &self.stages {
            Stages::Anchor { first, .. } => Some(&first.z),
            Stages::Full(_) => None,
        }
    }
}

pub(crate) fn attention_forward<T: Real>(
    x: ArrayView2<'_, T>,
    anchors: &[usize],
    kind: AttentionKind,
    p: &LayerParams<T>,
    heads: usize,
    layer: usize,
) -> Result<(Array2<T>, AttentionCache<T>)> {
    let (z, stages) = match kind {
        AttentionKind::Anchor => {
            if anchors.is_empty() || anchors.iter().any(|&a| a >= x.nrows()) {
                return Err(Error::Config(format!(
                    "layer {layer}: anchor set is empty or out of range"
                )));
            }
            let xa = x.select(Axis(0), anchors);
            let first = mha_forward(xa.view(), x, p, heads, layer)?;
            let second = mha_forward(x, first.z.view(), p, heads, layer)?;
            let z = second.z.dot(&p.wo);
            (z, Stages::Anchor { xa, first, second })
        }
        AttentionKind::Full => {
            let c = mha_forward(x, x, p, heads, layer)?;
            (c.z.dot(&p.wo), Stages::Full(c))
        }
    };
    let y = &x + &z;
    Ok((
        y,
        AttentionCache {
            anchors: anchors.to_vec(),
            stages,
        },
    ))
}

/// Backward through `Y = X + Attn(X)`; returns `∂X`.
pub(crate) fn attention_backward<T: Real>(
    dy: ArrayView2<'_, T>,
    x: ArrayView2<'_, T>,
    c: &AttentionCache<T>,
    p: &LayerParams<T>,
    g: &mut LayerParams<T>,
) -> Array2<T> {
    let mut dx = dy.to_owned();
    match &c.stages {
        Stages::Anchor { xa, first, second } => {
            g.wo += &second.z.t().dot(&dy);
            let dz2 = dy.dot(&p.wo.t());
            let (dxq, de2) = mha_backward(dz2.view(), x, first.z.view(), second, p, g);
            dx += &dxq;
            let (dxa, dxs) = mha_backward(de2.view(), xa.view(), x, first, p, g);
            dx += &dxs;
            for (row, &a) in dxa.rows().into_iter().zip(&c.anchors) {
                let mut target = dx.row_mut(a);
                target += &row;
            }
        }
        Stages::Full(m) => {
            g.wo += &m.z.t().dot(&dy);
            let dz = dy.dot(&p.wo.t());
            let (dxq, dxs) = mha_backward(dz.view(), x, x, m, p, g);
            dx += &dxq;
            dx += &dxs;
        }
    }
    dx
}

/// One attention block `X + Attn(X)` with the given anchors.
pub fn anchor_attention<T: Real>(
    seq: ArrayView2<'_, T>,
    anchors: &[usize],
    params: &LayerParams<T>,
    heads: usize,
) -> Result<(Array2<T>, AttentionCache<T>)> {
    let d = seq.ncols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!(
            "dimension {d} is not divisible by {heads} heads"
        )));
    }
    if params.wq.nrows() != d {
        return Err(Error::shape("sequence width does not match parameters"));
    }
    attention_forward(seq, anchors, AttentionKind::Anchor, params, heads, 0)
}
