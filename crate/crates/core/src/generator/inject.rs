use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gibbs_sample, GeneratedGraph, GibbsConfig, InteractionMode};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::pretrainer::{pairwise_link_loss, Adam, TripletRows};
use crate::transformer::sample_triplets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Edges per optimization step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for InjectConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.01,
            batch_size: 1024,
            seed: 0,
        }
    }
}

/// `D^-1/2 (A + I) D^-1/2 · x`.
fn propagate(g: &SparseGraph, x: &Array2<f64>) -> Array2<f64> {
    let scale: Vec<f64> = g.degree_vector().iter().map(|&d| 1.0 / ((d + 1) as f64).sqrt()).collect();
    let mut out = Array2::zeros(x.raw_dim());
    for v in 0..g.num_nodes() {
        let mut row = out.row_mut(v);
        row.scaled_add(scale[v] * scale[v], &x.row(v));
        for &u in g.neighbors(v as u32) {
            row.scaled_add(scale[v] * scale[u as usize], &x.row(u as usize));
        }
    }
    out
}

fn normalize_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    m
}

/// Refreshes entity embeddings with a two-layer linear graph convolution trained to rank
/// generated edges above non-edges. Person nodes start from the mean of their entities.
pub fn inject_topology(gen: &GeneratedGraph, cfg: &InjectConfig) -> Result<Array2<f64>> {
    gen.validate()?;
    let h = gen.embeddings()?;
    if cfg.epochs == 0 {
        return Ok(h);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("batch_size and learning_rate must be positive".into()));
    }
    let g = gen.to_graph()?;
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = gen.profiles.len();
    let d = h.ncols();
    let mut x0 = Array2::zeros((g.num_nodes(), d));
    x0.slice_mut(ndarray::s![..n, ..]).assign(&h);
    if gen.mode == InteractionMode::PersonEntity {
        for (k, inter) in gen.interactions.iter().enumerate() {
            let mut row = x0.row_mut(n + k);
            for &e in inter {
                row += &h.row(e as usize);
            }
        }
        x0 = normalize_rows(x0);
    }
    let x = propagate(&g, &propagate(&g, &x0));

    let mut w1 = Array2::<f64>::eye(d);
    let mut w2 = Array2::<f64>::eye(d);
    let mut adam = Adam::<f64>::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 0..cfg.epochs {
        let triplets = sample_triplets(&g, cfg.batch_size, &mut rng)?;
        if triplets.is_empty() {
            break;
        }
        let b = triplets.len();
        let nodes: Vec<usize> = triplets
            .iter()
            .map(|t| t.centric)
            .chain(triplets.iter().map(|t| t.positive))
            .chain(triplets.iter().map(|t| t.negative))
            .map(|v| v as usize)
            .collect();
        let xr = x.select(Axis(0), &nodes);
        let yr = xr.dot(&w1);
        let zr = yr.dot(&w2);
        let (loss, dz) = pairwise_link_loss(zr.view(), &TripletRows::stacked(b));
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("topology injection loss diverged at epoch {epoch}")));
        }
        let g2 = yr.t().dot(&dz);
        let g1 = xr.t().dot(&dz.dot(&w2.t()));
        log::debug!("injection epoch {epoch}: loss {loss:.6}");
        adam.step(
            vec![w1.as_slice_mut().unwrap(), w2.as_slice_mut().unwrap()],
            vec![g1.as_slice().unwrap(), g2.as_slice().unwrap()],
        )?;
    }
    let z = x.slice(ndarray::s![..n, ..]).dot(&w1).dot(&w2);
    Ok(normalize_rows(z))
}

/// Rebuilds the interactions from topology-refreshed embeddings.
pub fn inject_and_resample<R: Rng + ?Sized>(
    base: &GeneratedGraph,
    inject: &InjectConfig,
    gibbs: &GibbsConfig,
    rng: &mut R,
) -> Result<GeneratedGraph> {
    let refreshed = inject_topology(base, inject)?;
    let mut profiles = base.profiles.clone();
    for (p, row) in profiles.iter_mut().zip(refreshed.rows()) {
        p.embedding = row.to_vec();
    }
    let interactions = gibbs_sample(&profiles, gibbs, rng)?;
    Ok(GeneratedGraph {
        profiles,
        interactions,
        mode: gibbs.mode,
    })
}
