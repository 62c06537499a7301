use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::attention::{attention_backward, attention_forward, AttentionCache};
use super::{LayerParams, Real, TransformerModel, LN_EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

/// Row-wise layer norm with learnable gain and bias. Constant rows normalize to zero.
fn ln_forward<T: Real>(
    x: &Array2<T>,
    gamma: ArrayView1<'_, T>,
    beta: ArrayView1<'_, T>,
) -> (Array2<T>, LnCache<T>) {
    let d = T::lit(x.ncols() as f64);
    let eps = T::lit(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
        *s = T::one() / (var + eps).sqrt();
        let k = *s;
        row.mapv_inplace(|v| v * k);
    }
    let mut y = xhat.clone();
    y *= &gamma;
    y += &beta;
    (y, LnCache { xhat, inv_std })
}

fn ln_backward<T: Real>(
    dy: &Array2<T>,
    c: &LnCache<T>,
    gamma: ArrayView1<'_, T>,
    dgamma: &mut Array1<T>,
    dbeta: &mut Array1<T>,
) -> Array2<T> {
    *dgamma += &(dy * &c.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = T::lit(dy.ncols() as f64);
    let mut dx = dy * &gamma;
    for ((mut row, xh), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(c.xhat.rows())
        .zip(c.inv_std.iter())
    {
        let mean_g = row.sum() / d;
        let mean_gx = row.dot(&xh) / d;
        Zip::from(&mut row)
            .and(&xh)
            .for_each(|g, &x| *g = s * (*g - mean_g - x * mean_gx));
    }
    dx
}

/// Values one layer saves for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    x: Array2<T>,
    attn: AttentionCache<T>,
    ln1: LnCache<T>,
    h1: Array2<T>,
    pre: Array2<T>,
    ln2: LnCache<T>,
}

/// Activations recorded by [`forward`], consumed by [`gradients`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn attention(&self, layer: usize) -> Option<&AttentionCache<T>> {
        self.layers.get(layer).map(|l| &l.attn)
    }
}

fn layer_forward<T: Real>(
    model: &TransformerModel<T>,
    l: usize,
    x: Array2<T>,
    anchors: &[usize],
) -> Result<(Array2<T>, LayerCache<T>)> {
    let cfg = &model.config;
    let p = &model.layers[l];
    let (y, attn) = attention_forward(x.view(), anchors, cfg.attention, p, cfg.heads, l)?;
    let (h1, ln1) = ln_forward(&y, p.ln1_gamma.view(), p.ln1_beta.view());
    drop(y);
    let mut pre = h1.dot(&p.w1);
    pre += &p.b1;
    let act = pre.mapv(|v| v.max(T::zero()));
    let mut g = act.dot(&p.w2);
    drop(act);
    g += &p.b2;
    g += &h1;
    let (mut out, ln2) = ln_forward(&g, p.ln2_gamma.view(), p.ln2_beta.view());
    drop(g);
    out.mapv_inplace(|v| v / T::lit(cfg.scale));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite activations in layer {l}")));
    }
    Ok((
        out,
        LayerCache {
            x,
            attn,
            ln1,
            h1,
            pre,
            ln2,
        },
    ))
}

fn layer_backward<T: Real>(
    model: &TransformerModel<T>,
    l: usize,
    c: &LayerCache<T>,
    dout: Array2<T>,
    g: &mut LayerParams<T>,
) -> Array2<T> {
    let p = &model.layers[l];
    let mut dh2 = dout;
    dh2.mapv_inplace(|v| v / T::lit(model.config.scale));
    let dg = ln_backward(&dh2, &c.ln2, p.ln2_gamma.view(), &mut g.ln2_gamma, &mut g.ln2_beta);
    drop(dh2);
    let act = c.pre.mapv(|v| v.max(T::zero()));
    g.w2 += &act.t().dot(&dg);
    drop(act);
    g.b2 += &dg.sum_axis(Axis(0));
    let mut dpre = dg.dot(&p.w2.t());
    Zip::from(&mut dpre)
        .and(&c.pre)
        .for_each(|d, &z| {
            if z <= T::zero() {
                *d = T::zero();
            }
        });
    g.w1 += &c.h1.t().dot(&dpre);
    g.b1 += &dpre.sum_axis(Axis(0));
    let mut dh1 = dg;
    dh1 += &dpre.dot(&p.w1.t());
    drop(dpre);
    let dy = ln_backward(&dh1, &c.ln1, p.ln1_gamma.view(), &mut g.ln1_gamma, &mut g.ln1_beta);
    attention_backward(dy.view(), c.x.view(), &c.attn, p, g)
}

fn check_inputs<T: Real>(
    model: &TransformerModel<T>,
    seq: &ArrayView2<'_, T>,
    anchors: &[Vec<usize>],
) -> Result<()> {
    model.config.validate()?;
    if seq.ncols() != model.config.dim {
        return Err(Error::shape(format!(
            "sequence width {} does not match model dimension {}",
            seq.ncols(),
            model.config.dim
        )));
    }
    if model.config.attention == super::AttentionKind::Anchor && anchors.len() < model.layers.len() {
        return Err(Error::Config(format!(
            "{} anchor sets for {} layers",
            anchors.len(),
            model.layers.len()
        )));
    }
    Ok(())
}

/// Full forward pass recording activations; `anchors[l]` feeds layer `l`.
pub fn forward<T: Real>(
    model: &TransformerModel<T>,
    seq: ArrayView2<'_, T>,
    anchors: &[Vec<usize>],
) -> Result<(Array2<T>, ForwardCache<T>)> {
    check_inputs(model, &seq, anchors)?;
    let mut x = seq.to_owned();
    let mut layers = Vec::with_capacity(model.layers.len());
    for l in 0..model.layers.len() {
        let a = anchors.get(l).map(Vec::as_slice).unwrap_or(&[]);
        let (out, cache) = layer_forward(model, l, x, a)?;
        layers.push(cache);
        x = out;
    }
    Ok((x, ForwardCache { layers }))
}

/// Forward pass without keeping activations.
pub fn forward_inference<T: Real>(
    model: &TransformerModel<T>,
    seq: ArrayView2<'_, T>,
    anchors: &[Vec<usize>],
) -> Result<Array2<T>> {
    check_inputs(model, &seq, anchors)?;
    let mut x = seq.to_owned();
    for l in 0..model.layers.len() {
        let a = anchors.get(l).map(Vec::as_slice).unwrap_or(&[]);
        x = layer_forward(model, l, x, a)?.0;
    }
    Ok(x)
}

/// Reverse-mode gradients of a scalar loss given `∂loss/∂output`.
///
/// Returns the parameter gradients and the gradient with respect to the input sequence.
pub fn gradients<T: Real>(
    model: &TransformerModel<T>,
    cache: Option<&ForwardCache<T>>,
    d_output: ArrayView2<'_, T>,
) -> Result<(TransformerModel<T>, Array2<T>)> {
    let cache = cache.ok_or_else(|| Error::State("gradients requested without a forward pass".into()))?;
    if cache.layers.len() != model.layers.len() {
        return Err(Error::State(format!(
            "cache holds {} layers, model has {}",
            cache.layers.len(),
            model.layers.len()
        )));
    }
    let mut grads = model.zeros_like();
    let mut d = d_output.to_owned();
    for l in (0..model.layers.len()).rev() {
        d = layer_backward(model, l, &cache.layers[l], d, &mut grads.layers[l]);
    }
    Ok((grads, d))
}
