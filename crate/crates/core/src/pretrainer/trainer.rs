use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    mask_edges, pairwise_link_loss, Adam, SequenceMode, TokenSource, TrainConfig, TripletRows,
};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, SparseGraph};
use crate::tokenizer::{
    project_variant, projector_for_graph, tokenize_with, variant_row, Projector, VariantKind,
    VariantTable,
};
use crate::transformer::{
    forward, forward_inference, gradients, sample_anchors, sample_triplets, AttentionKind,
    Checkpoint, TransformerModel, Triplet,
};

const TAG_MODEL: u64 = 1;
const TAG_STREAM: u64 = 2;
const TAG_PROJECTOR: u64 = 3;
const TAG_TABLE: u64 = 4;

/// Deterministic sub-seed for a purpose tag and index.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.to_le_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
    pub graph: usize,
}

struct GraphSlot {
    graph: SparseGraph,
    adj: NormalizedAdjacency,
    hash: String,
    projector: Option<Projector>,
    tokens: Option<Array2<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedState {
    step: u64,
    adam_t: u64,
    rng_seed: String,
    rng_stream: u64,
    rng_word_pos: String,
    refreshes: Vec<u64>,
    config: TrainConfig,
}

/// Single-writer training state over a fixed list of graphs.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: TransformerModel<f32>,
    /// Learnable token table for the one-hot and degree sources.
    pub table: Option<Array2<f32>>,
    pub step: u64,
    pub history: Vec<LossRecord>,
    /// `(step, graph)` for every projector rebuild.
    pub refresh_log: Vec<(u64, usize)>,
    adam: Adam<f32>,
    rng: ChaCha8Rng,
    refreshes: Vec<u64>,
    slots: Vec<GraphSlot>,
}

fn projector_seed(base: u64, graph: usize, refresh: u64) -> u64 {
    derive_seed(base, TAG_PROJECTOR, ((graph as u64) << 32) | refresh)
}

impl Trainer {
    pub fn new(graphs: Vec<SparseGraph>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if graphs.is_empty() {
            return Err(Error::Config("at least one training graph is required".into()));
        }
        let mut slots = Vec::with_capacity(graphs.len());
        for (i, graph) in graphs.into_iter().enumerate() {
            if graph.nnz() == 0 {
                return Err(Error::Sampling(format!("training graph {i} has no edges")));
            }
            if cfg.sequence == SequenceMode::FullGraph
                && cfg.attention == AttentionKind::Anchor
                && cfg.anchors > graph.num_nodes()
            {
                return Err(Error::Config(format!(
                    "graph {i} has fewer nodes than the anchor count"
                )));
            }
            let adj = normalize_adjacency(&graph);
            let hash = graph.structure_hash();
            let mut slot = GraphSlot {
                graph,
                adj,
                hash,
                projector: None,
                tokens: None,
            };
            match cfg.tokens {
                TokenSource::Projection => {
                    let p = projector_for_graph(&slot.adj, &cfg.tokenizer_config(), projector_seed(cfg.seed, i, 0))?;
                    slot.tokens = Some(tokenize_with(&slot.adj, &p, slot.hash.clone())?.embeddings);
                    slot.projector = Some(p);
                }
                TokenSource::Random => {
                    slot.tokens = Some(
                        project_variant(&slot.graph, VariantKind::Random, cfg.dim, derive_seed(cfg.seed, TAG_TABLE, i as u64))
                            .embeddings,
                    );
                }
                TokenSource::OneHot | TokenSource::Degree => {}
            }
            slots.push(slot);
        }
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_MODEL, 0));
        let model = TransformerModel::new(cfg.model_config(), &mut init)?;
        let table = match cfg.tokens.variant() {
            Some(kind) if kind.learnable() => Some(
                VariantTable::new(kind, 0, cfg.dim, derive_seed(cfg.seed, TAG_TABLE, u64::MAX))
                    .table
                    .mapv(|v| v as f32),
            ),
            _ => None,
        };
        Ok(Self {
            adam: Adam::new(cfg.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_STREAM, 0)),
            refreshes: vec![0; slots.len()],
            cfg,
            model,
            table,
            step: 0,
            history: Vec::new(),
            refresh_log: Vec::new(),
            slots,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.slots.len()
    }

    pub fn projector(&self, graph: usize) -> Option<&Projector> {
        self.slots.get(graph).and_then(|s| s.projector.as_ref())
    }

    fn refresh(&mut self, gi: usize) -> Result<()> {
        let slot = &mut self.slots[gi];
        if self.cfg.tokens != TokenSource::Projection {
            return Ok(());
        }
        self.refreshes[gi] += 1;
        let seed = projector_seed(self.cfg.seed, gi, self.refreshes[gi]);
        let p = projector_for_graph(&slot.adj, &self.cfg.tokenizer_config(), seed)?;
        slot.tokens = Some(tokenize_with(&slot.adj, &p, slot.hash.clone())?.embeddings);
        slot.projector = Some(p);
        self.refresh_log.push((self.step, gi));
        Ok(())
    }

    /// Tokens of `nodes` in `graph`, using the masked graph when requested.
    fn gather_tokens(
        &self,
        gi: usize,
        nodes: &[u32],
        masked: Option<&SparseGraph>,
    ) -> Result<Array2<f32>> {
        let slot = &self.slots[gi];
        if let Some(table) = &self.table {
            let kind = self.cfg.tokens.variant().expect("learnable source");
            let rows: Vec<usize> = nodes.iter().map(|&u| variant_row(kind, &slot.graph, u)).collect();
            return Ok(table.select(Axis(0), &rows));
        }
        let owned;
        let tokens = match (masked, &slot.projector) {
            (Some(g), Some(p)) => {
                owned = tokenize_with(&normalize_adjacency(g), p, String::new())?.embeddings;
                &owned
            }
            _ => slot.tokens.as_ref().expect("fixed tokens"),
        };
        let idx: Vec<usize> = nodes.iter().map(|&u| u as usize).collect();
        Ok(tokens.select(Axis(0), &idx).mapv(|v| v as f32))
    }

    /// One optimization step on a uniformly drawn graph.
    pub fn train_step(&mut self) -> Result<LossRecord> {
        let gi = self.rng.random_range(0..self.slots.len());
        let every = self.cfg.projector_refresh_every;
        if self.step > 0 && self.step % every == 0 {
            self.refresh(gi)?;
        }
        let batch_seed = self.rng.next_u64();
        let mut brng = ChaCha8Rng::seed_from_u64(batch_seed);
        let b = self.cfg.batch_size;
        let triplets = sample_triplets(&self.slots[gi].graph, b, &mut brng)?;
        let positives: Vec<(u32, u32)> = triplets.iter().map(|t| (t.centric, t.positive)).collect();
        let masked = if self.cfg.strict_mae {
            Some(mask_edges(&self.slots[gi].graph, &positives)?.to_graph())
        } else {
            None
        };
        let (nodes, rows) = match self.cfg.sequence {
            SequenceMode::Sampled => (sequence_ids(&triplets), TripletRows::stacked(b)),
            SequenceMode::FullGraph => {
                let n = self.slots[gi].graph.num_nodes() as u32;
                let rows = TripletRows {
                    centric: triplets.iter().map(|t| t.centric as usize).collect(),
                    positive: triplets.iter().map(|t| t.positive as usize).collect(),
                    negative: triplets.iter().map(|t| t.negative as usize).collect(),
                };
                ((0..n).collect(), rows)
            }
        };
        let seq = self.gather_tokens(gi, &nodes, masked.as_ref())?;
        drop(masked);
        let anchors = self.anchor_sets(seq.nrows(), &mut brng)?;

        let (out, cache) = forward(&self.model, seq.view(), &anchors)?;
        let (data_loss, d_out) = pairwise_link_loss(out.view(), &rows);
        drop(out);
        let lambda = self.cfg.l2_lambda;
        let l2: f64 = self
            .model
            .named_tensors()
            .iter()
            .flat_map(|(_, _, t)| t.iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum();
        let loss = data_loss + lambda * l2;
        if !loss.is_finite() {
            log::error!(
                "non-finite loss at step {} on graph {gi} (batch seed {batch_seed})",
                self.step
            );
            return Err(Error::NonFiniteLoss {
                step: self.step,
                graph: gi,
                batch_seed,
            });
        }
        let (mut grads, d_in) = gradients(&self.model, Some(&cache), d_out.view())?;
        drop(cache);
        let two_lambda = (2.0 * lambda) as f32;
        for (g, p) in grads.tensors_mut().into_iter().zip(self.model.named_tensors()) {
            for (gv, &pv) in g.iter_mut().zip(p.2) {
                *gv += two_lambda * pv;
            }
        }
        let table_grad = self.table.as_ref().map(|t| {
            let kind = self.cfg.tokens.variant().expect("learnable source");
            let mut tg = Array2::<f32>::zeros(t.raw_dim());
            for (slot_row, &u) in nodes.iter().enumerate() {
                let r = variant_row(kind, &self.slots[gi].graph, u);
                let mut dst = tg.row_mut(r);
                dst += &d_in.row(slot_row);
            }
            tg
        });
        let grad_slices: Vec<Vec<f32>> = grads
            .named_tensors()
            .into_iter()
            .map(|(_, _, t)| t.to_vec())
            .collect();
        let mut params: Vec<&mut [f32]> = self.model.tensors_mut();
        let mut grad_refs: Vec<&[f32]> = grad_slices.iter().map(Vec::as_slice).collect();
        if let (Some(t), Some(tg)) = (self.table.as_mut(), table_grad.as_ref()) {
            params.push(t.as_slice_mut().expect("contiguous table"));
            grad_refs.push(tg.as_slice().expect("contiguous gradient"));
        }
        self.adam.step(params, grad_refs)?;
        if !self.model.all_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite at step {}",
                self.step
            )));
        }
        let rec = LossRecord {
            step: self.step,
            loss,
            graph: gi,
        };
        self.step += 1;
        self.history.push(rec);
        Ok(rec)
    }

    fn anchor_sets(&self, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
        if self.cfg.attention != AttentionKind::Anchor {
            return Ok(Vec::new());
        }
        (0..self.cfg.layers)
            .map(|_| sample_anchors(len, self.cfg.anchors, rng))
            .collect()
    }

    /// Trains until `max_steps`, appending to `losses.csv` and checkpointing into `out`.
    pub fn run(&mut self, out: Option<&Path>) -> Result<()> {
        let mut csv = match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join("losses.csv");
                let fresh = self.step == 0 || !path.exists();
                let mut f = OpenOptions::new()
                    .create(true)
                    .write(true)
                    .append(!fresh)
                    .truncate(fresh)
                    .open(path)?;
                if fresh {
                    writeln!(f, "step,loss,graph_id")?;
                }
                Some(f)
            }
            None => None,
        };
        while self.step < self.cfg.max_steps {
            let rec = self.train_step()?;
            if rec.step % 100 == 0 || rec.step == self.cfg.max_steps {
                log::info!("step {} loss {:.6} graph {}", rec.step, rec.loss, rec.graph);
            }
            if let Some(f) = csv.as_mut() {
                writeln!(f, "{},{},{}", rec.step, rec.loss, rec.graph)?;
            }
            if let Some(dir) = out {
                let every = self.cfg.checkpoint_every;
                if every > 0 && self.step % every == 0 && self.step < self.cfg.max_steps {
                    self.save(dir)?;
                }
            }
        }
        if let Some(dir) = out {
            self.save(dir)?;
        }
        Ok(())
    }

    /// Model checkpoint plus everything needed to resume bit-exactly.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.model_checkpoint().write(dir.join("model.ckpt"))?;
        let mut opt = Checkpoint::new(self.model.config);
        for (i, (m, v)) in self.adam.m.iter().zip(&self.adam.v).enumerate() {
            opt.push(format!("adam.m.{i}"), vec![m.len()], m.clone());
            opt.push(format!("adam.v.{i}"), vec![v.len()], v.clone());
        }
        opt.write(dir.join("optimizer.ckpt"))?;
        let state = SavedState {
            step: self.step,
            adam_t: self.adam.t,
            rng_seed: hex::encode(self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            refreshes: self.refreshes.clone(),
            config: self.cfg.clone(),
        };
        write_atomic(&dir.join("state.json"), serde_json::to_string_pretty(&state)?.as_bytes())?;
        write_atomic(
            &dir.join("train_config.json"),
            serde_json::to_string_pretty(&self.cfg)?.as_bytes(),
        )
    }

    pub fn model_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::from_model(&self.model);
        if let Some(t) = &self.table {
            c.push("tokens.table", vec![t.nrows(), t.ncols()], t.iter().copied().collect());
        }
        c
    }

    /// Restores a run saved by [`Trainer::save`] over the same graphs.
    pub fn resume(graphs: Vec<SparseGraph>, dir: &Path) -> Result<Self> {
        let state: SavedState = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
        let mut t = Self::new(graphs, state.config.clone())?;
        if state.refreshes.len() != t.slots.len() {
            return Err(Error::State("saved run used a different number of graphs".into()));
        }
        let ckpt = Checkpoint::read(dir.join("model.ckpt"))?;
        t.model = ckpt.to_model()?;
        if let Some(table) = t.table.as_mut() {
            let saved = ckpt
                .get("tokens.table")
                .ok_or_else(|| Error::State("checkpoint lacks the token table".into()))?;
            *table = Array2::from_shape_vec(table.raw_dim(), saved.data.clone())
                .map_err(|e| Error::shape(e.to_string()))?;
        }
        let opt = Checkpoint::read(dir.join("optimizer.ckpt"))?;
        let count = opt.tensors.len() / 2;
        t.adam.m = (0..count)
            .map(|i| opt.get(&format!("adam.m.{i}")).map(|x| x.data.clone()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::State("optimizer checkpoint is incomplete".into()))?;
        t.adam.v = (0..count)
            .map(|i| opt.get(&format!("adam.v.{i}")).map(|x| x.data.clone()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::State("optimizer checkpoint is incomplete".into()))?;
        t.adam.t = state.adam_t;
        let seed: [u8; 32] = hex::decode(&state.rng_seed)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::State("bad generator seed".into()))?;
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(state.rng_stream);
        t.rng.set_word_pos(
            state
                .rng_word_pos
                .parse()
                .map_err(|_| Error::State("bad generator position".into()))?,
        );
        t.step = state.step;
        for gi in 0..t.slots.len() {
            let r = state.refreshes[gi];
            if r > 0 && t.cfg.tokens == TokenSource::Projection {
                let slot = &mut t.slots[gi];
                let p = projector_for_graph(&slot.adj, &t.cfg.tokenizer_config(), projector_seed(t.cfg.seed, gi, r))?;
                slot.tokens = Some(tokenize_with(&slot.adj, &p, slot.hash.clone())?.embeddings);
                slot.projector = Some(p);
            }
        }
        t.refreshes = state.refreshes;
        Ok(t)
    }
}

/// A trained model as read back from a run directory.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub model: TransformerModel<f32>,
    pub table: Option<Array2<f32>>,
}

impl TrainedModel {
    /// Reads `model.ckpt` and `train_config.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(&fs::read_to_string(dir.join("train_config.json"))?)?;
        let ckpt = Checkpoint::read(dir.join("model.ckpt"))?;
        let model: TransformerModel<f32> = ckpt.to_model()?;
        if model.config != config.model_config() {
            return Err(Error::State("checkpoint does not match its training config".into()));
        }
        let table = match ckpt.get("tokens.table") {
            Some(t) if t.shape.len() == 2 => Some(
                Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                    .map_err(|e| Error::shape(e.to_string()))?,
            ),
            Some(_) => return Err(Error::State("token table must be two-dimensional".into())),
            None => None,
        };
        Ok(Self { config, model, table })
    }
}

fn sequence_ids(triplets: &[Triplet]) -> Vec<u32> {
    triplets
        .iter()
        .map(|t| t.centric)
        .chain(triplets.iter().map(|t| t.positive))
        .chain(triplets.iter().map(|t| t.negative))
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Embeds every node by running the model over shuffled chunks of `chunk` tokens.
pub fn embed_nodes(
    model: &TransformerModel<f32>,
    tokens: ArrayView2<'_, f64>,
    chunk: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let n = tokens.nrows();
    let d = model.config.dim;
    if tokens.ncols() != d {
        return Err(Error::shape(format!(
            "tokens have width {}, model expects {d}",
            tokens.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut out = Array2::zeros((n, d));
    for part in order.chunks(chunk.max(1)) {
        let seq = tokens.select(Axis(0), part).mapv(|v| v as f32);
        let anchors = if model.config.attention == AttentionKind::Anchor {
            let s = model.config.anchors.min(part.len());
            (0..model.config.layers)
                .map(|_| sample_anchors(part.len(), s, &mut rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let emb = forward_inference(model, seq.view(), &anchors)?;
        for (row, &node) in emb.rows().into_iter().zip(part) {
            out.row_mut(node).assign(&row.mapv(|v| v as f64));
        }
    }
    Ok(out)
}
