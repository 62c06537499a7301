//! Zero-shot link prediction and node classification metrics.

mod report;
mod split;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::pretrainer::{embed_nodes, TokenSource};
use crate::tokenizer::{project_variant, tokenize_graph, variant_row, TokenizerConfig, VariantKind};
use crate::transformer::TransformerModel;

pub use report::{DatasetReport, EvalReport, EvalSettings, REPORT_SCHEMA_VERSION};
pub use split::{link_holdout, make_k_shot_links, make_k_shot_nodes, SplitMode, SplitSpec};

/// Recall cut-offs reported by default.
pub const DEFAULT_RECALL_NS: [usize; 2] = [20, 40];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallOptions {
    /// Average over test edges instead of over query nodes.
    pub micro: bool,
    /// Nodes below this index form one side of a bipartite graph; candidates come from the other side.
    pub partition: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    /// `(N, recall)` in the order requested.
    pub recall: Vec<(usize, f64)>,
    pub queries: usize,
    /// Queries with test neighbors but no rankable candidates.
    pub skipped: usize,
}

impl RecallResult {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.recall.iter().find(|(k, _)| *k == n).map(|(_, r)| *r)
    }
}

fn test_neighbors(n: usize, test_edges: &[(u32, u32)], train: &SparseGraph) -> Result<Vec<Vec<u32>>> {
    let mut out = vec![Vec::new(); n];
    for &(u, v) in test_edges {
        for x in [u, v] {
            if x as usize >= n {
                return Err(Error::Bounds {
                    index: x as u64,
                    num_nodes: n,
                });
            }
        }
        if u == v {
            continue;
        }
        if train.has_edge(u, v) {
            return Err(Error::Config(format!("test edge ({u}, {v}) is also a training edge")));
        }
        out[u as usize].push(v);
        out[v as usize].push(u);
    }
    for list in &mut out {
        list.sort_unstable();
        list.dedup();
    }
    Ok(out)
}

/// Full-rank Recall@N with scores supplied per query as a row over all nodes.
///
/// Candidates exclude the query and its training neighbors. Ranking is by score
/// descending, then node id ascending.
pub fn recall_at_n_with<F>(
    num_nodes: usize,
    score_row: F,
    train: &SparseGraph,
    test_edges: &[(u32, u32)],
    ns: &[usize],
    opts: &RecallOptions,
) -> Result<RecallResult>
where
    F: Fn(u32) -> Vec<f64> + Sync,
{
    if train.num_nodes() != num_nodes {
        return Err(Error::shape("training graph and scores disagree on node count"));
    }
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config("recall cut-offs must be positive".into()));
    }
    let truth = test_neighbors(num_nodes, test_edges, train)?;
    let max_n = *ns.iter().max().unwrap();
    let queries: Vec<u32> = (0..num_nodes as u32).filter(|&q| !truth[q as usize].is_empty()).collect();

    // (hits at each N, number of test neighbors), or None when skipped.
    let per_query: Vec<Option<(Vec<usize>, usize)>> = queries
        .par_iter()
        .map(|&q| -> Result<Option<(Vec<usize>, usize)>> {
            let scores = score_row(q);
            if scores.len() != num_nodes {
                return Err(Error::shape("score row has the wrong length"));
            }
            let side = opts.partition.map(|p| (q as usize) < p);
            let mut cands: Vec<u32> = (0..num_nodes as u32)
                .filter(|&c| c != q && !train.has_edge(q, c))
                .filter(|&c| side.is_none_or(|s| ((c as usize) < opts.partition.unwrap()) != s))
                .collect();
            if cands.is_empty() {
                return Ok(None);
            }
            if let Some(&c) = cands.iter().find(|&&c| !scores[c as usize].is_finite()) {
                return Err(Error::Numeric(format!("score of ({q}, {c}) is not finite")));
            }
            let cmp = |a: &u32, b: &u32| {
                scores[*b as usize]
                    .total_cmp(&scores[*a as usize])
                    .then(a.cmp(b))
            };
            let top = max_n.min(cands.len());
            if top < cands.len() {
                cands.select_nth_unstable_by(top - 1, cmp);
                cands.truncate(top);
            }
            cands.sort_unstable_by(cmp);
            let t = &truth[q as usize];
            let hits = ns
                .iter()
                .map(|&n| cands.iter().take(n).filter(|c| t.binary_search(c).is_ok()).count())
                .collect();
            Ok(Some((hits, t.len())))
        })
        .collect::<Result<_>>()?;

    let skipped = per_query.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} query nodes had no candidates and were skipped");
    }
    let scored: Vec<&(Vec<usize>, usize)> = per_query.iter().flatten().collect();
    let recall = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let value = if scored.is_empty() {
                0.0
            } else if opts.micro {
                let hits: usize = scored.iter().map(|(h, _)| h[k]).sum();
                let total: usize = scored.iter().map(|(_, t)| t).sum();
                hits as f64 / total as f64
            } else {
                scored.iter().map(|(h, t)| h[k] as f64 / *t as f64).sum::<f64>() / scored.len() as f64
            };
            (n, value)
        })
        .collect();
    Ok(RecallResult {
        recall,
        queries: scored.len(),
        skipped,
    })
}

/// Recall@N scored by dot products of node embeddings.
pub fn recall_at_n(
    emb: ArrayView2<'_, f64>,
    train: &SparseGraph,
    test_edges: &[(u32, u32)],
    ns: &[usize],
    opts: &RecallOptions,
) -> Result<RecallResult> {
    recall_at_n_with(
        emb.nrows(),
        |q| emb.dot(&emb.row(q as usize)).to_vec(),
        train,
        test_edges,
        ns,
        opts,
    )
}

/// Predicts, for each test node, the class whose class node scores highest.
/// Class `c` lives at row `class_offset + c`; ties go to the lowest class.
pub fn classify_by_class_nodes(
    emb: ArrayView2<'_, f64>,
    class_offset: usize,
    class_count: usize,
    test_nodes: &[u32],
) -> Result<Vec<u32>> {
    if class_count == 0 || emb.nrows() < class_offset + class_count {
        return Err(Error::MissingClassNodes);
    }
    let classes = emb.slice(ndarray::s![class_offset..class_offset + class_count, ..]);
    test_nodes
        .iter()
        .map(|&u| {
            if u as usize >= class_offset {
                return Err(Error::Bounds {
                    index: u as u64,
                    num_nodes: class_offset,
                });
            }
            let scores = classes.dot(&emb.row(u as usize));
            let mut best = 0;
            for c in 1..class_count {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            Ok(best as u32)
        })
        .collect()
}

/// Accuracy and macro-F1 over `class_count` classes; classes never seen score F1 = 0.
pub fn accuracy_macro_f1(preds: &[u32], truths: &[u32], class_count: usize) -> Result<(f64, f64)> {
    if preds.len() != truths.len() {
        return Err(Error::shape("predictions and truths differ in length"));
    }
    if class_count == 0 {
        return Err(Error::Config("class_count must be positive".into()));
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fneg = vec![0usize; class_count];
    for (&p, &t) in preds.iter().zip(truths) {
        for x in [p, t] {
            if x as usize >= class_count {
                return Err(Error::Bounds {
                    index: x as u64,
                    num_nodes: class_count,
                });
            }
        }
        if p == t {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fneg[t as usize] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = if preds.is_empty() {
        0.0
    } else {
        correct as f64 / preds.len() as f64
    };
    let f1_sum: f64 = (0..class_count)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok((accuracy, f1_sum / class_count as f64))
}

/// Input tokens for `g` under the model's token source.
pub fn node_tokens(
    g: &SparseGraph,
    source: TokenSource,
    table: Option<&Array2<f32>>,
    tokenizer: &TokenizerConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    match source {
        TokenSource::Projection => Ok(tokenize_graph(g, tokenizer, seed)?.1.embeddings),
        TokenSource::Random => Ok(project_variant(g, VariantKind::Random, tokenizer.dim, seed).embeddings),
        TokenSource::OneHot | TokenSource::Degree => {
            let table = table.ok_or_else(|| Error::State("learned token table missing".into()))?;
            let kind = source.variant().unwrap();
            let rows: Vec<usize> = (0..g.num_nodes() as u32).map(|u| variant_row(kind, g, u)).collect();
            Ok(table.select(Axis(0), &rows).mapv(f64::from))
        }
    }
}

/// Final-layer embeddings of every node of `g`.
pub fn embed_graph(
    model: &TransformerModel<f32>,
    g: &SparseGraph,
    source: TokenSource,
    table: Option<&Array2<f32>>,
    tokenizer: &TokenizerConfig,
    chunk: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let tokens = node_tokens(g, source, table, tokenizer, seed)?;
    embed_nodes(model, tokens.view(), chunk, seed)
}
