use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use graphfm::eval::{
    accuracy_macro_f1, classify_by_class_nodes, embed_graph, link_holdout, recall_at_n, DatasetReport,
    EvalReport, EvalSettings, RecallOptions, SplitSpec, DEFAULT_RECALL_NS,
};
use graphfm::graph::Dataset;
use graphfm::pretrainer::{derive_seed, SequenceMode, TrainedModel};
use graphfm::tokenizer::class_nodes_augment;
use graphfm::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config;
use crate::manifest::{hash_path, InputRecord, Run, RunManifest, MANIFEST_FILE};
use crate::Global;

const TAG_SPLIT: u64 = 201;
const TAG_EMBED: u64 = 202;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Node classification when the dataset has labels, link prediction otherwise.
    Auto,
    Link,
    Node,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `pretrain`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation dataset directory or edge list. Repeat for several datasets.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Recall cut-offs.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RECALL_NS.to_vec())]
    ns: Vec<usize>,
    /// Average recall over test edges instead of query nodes.
    #[arg(long)]
    micro: bool,
    /// Fraction of edges (or labeled nodes) held out when a dataset has no test split.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    /// Keep only k training links per node (or labeled nodes per class).
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_enum, default_value_t = Task::Auto)]
    task: Task,
    /// Rank only across the two sides of a bipartite dataset.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bipartite: bool,
    /// Evaluate on graphs the checkpoint was trained on.
    #[arg(long)]
    allow_seen: bool,
    /// Tokens per forward pass when embedding; defaults to the training sequence length.
    #[arg(long)]
    chunk: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ResolvedEval<'a> {
    checkpoint: &'a Path,
    data: &'a [PathBuf],
    ns: &'a [usize],
    micro: bool,
    holdout: f64,
    shots: Option<usize>,
    task: Task,
    bipartite: bool,
    allow_seen: bool,
    chunk: Option<usize>,
    seed: u64,
}

fn trained_hashes(checkpoint: &Path) -> Result<Option<BTreeSet<String>>> {
    let path = checkpoint.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let m = RunManifest::read(&path)?;
    Ok(Some(
        m.inputs.iter().flat_map(|i| [Some(i.sha256.clone()), i.graph_hash.clone()]).flatten().collect(),
    ))
}

pub fn run(global: &Global, args: EvaluateArgs) -> Result<u8> {
    let out = global.out()?;
    let seed = global.seed.unwrap_or(0);
    if args.ns.is_empty() || args.ns.contains(&0) {
        return Err(Error::Config("--ns needs positive cut-offs".into()));
    }
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(Error::Config("--holdout must lie in [0, 1)".into()));
    }
    let shots = args.shots.map(|k| SplitSpec::k_shot(k, derive_seed(seed, TAG_SPLIT, 1))).transpose()?;
    if !args.checkpoint.join("model.ckpt").exists() {
        return Err(Error::Config(format!("no checkpoint in {}", args.checkpoint.display())));
    }
    let value = config::announce(
        "evaluate",
        &ResolvedEval {
            checkpoint: &args.checkpoint,
            data: &args.data,
            ns: &args.ns,
            micro: args.micro,
            holdout: args.holdout,
            shots: args.shots,
            task: args.task,
            bipartite: args.bipartite,
            allow_seen: args.allow_seen,
            chunk: args.chunk,
            seed,
        },
    )?;

    let seen = trained_hashes(&args.checkpoint)?;
    if seen.is_none() && !args.allow_seen {
        log::warn!("checkpoint has no manifest; cannot check for training overlap");
    }
    let mut datasets = Vec::new();
    let mut inputs = vec![InputRecord {
        path: config::absolute(&args.checkpoint.join("model.ckpt")),
        sha256: hash_path(&args.checkpoint.join("model.ckpt"))?,
        graph_hash: None,
    }];
    for path in &args.data {
        let (ds, record) = config::load_graph_input(path)?;
        if let (Some(seen), false) = (&seen, args.allow_seen) {
            let hit = seen.contains(&record.sha256)
                || record.graph_hash.as_ref().is_some_and(|h| seen.contains(h));
            if hit {
                return Err(Error::Config(format!(
                    "{} was used to train this checkpoint; zero-shot evaluation refuses it (pass --allow-seen to override)",
                    path.display()
                )));
            }
        }
        datasets.push((path.clone(), ds));
        inputs.push(record);
    }

    let seeds = BTreeMap::from([("seed".to_string(), seed)]);
    let run = Run::start("evaluate", &out, value, seeds, inputs)?;
    let result = evaluate_all(&args, shots, seed, &datasets, &out);
    run.finish(result)
}

fn evaluate_all(
    args: &EvaluateArgs,
    shots: Option<SplitSpec>,
    seed: u64,
    datasets: &[(PathBuf, Dataset)],
    out: &Path,
) -> Result<u8> {
    let trained = TrainedModel::load(&args.checkpoint)?;
    let mut report = EvalReport::new(EvalSettings {
        recall_ns: args.ns.clone(),
        shots: args.shots,
        checkpoint: Some(hash_path(&args.checkpoint.join("model.ckpt"))?),
        micro: args.micro,
        seed,
    });
    for (i, (path, ds)) in datasets.iter().enumerate() {
        let name = config::dataset_name(path, &ds.meta);
        let task = match args.task {
            Task::Auto if ds.graph.labels().is_some() => Task::Node,
            Task::Auto => Task::Link,
            t => t,
        };
        let ds_seed = derive_seed(seed, TAG_SPLIT, i as u64);
        let embed_seed = derive_seed(seed, TAG_EMBED, i as u64);
        let r = match task {
            Task::Node => eval_node(&trained, ds, args, shots, ds_seed, embed_seed)?,
            _ => eval_link(&trained, ds, args, shots, ds_seed, embed_seed)?,
        };
        log::info!("{name}: {:?}", r.metrics);
        report.datasets.insert(name, r);
    }
    report.write(out.join(REPORT_FILE))?;
    print!("{report}");
    if !report.is_valid() {
        return Err(Error::Numeric("report contains metrics outside [0, 1]".into()));
    }
    Ok(0)
}

fn chunk_for(trained: &TrainedModel, args: &EvaluateArgs, n: usize) -> usize {
    args.chunk.unwrap_or(match trained.config.sequence {
        SequenceMode::Sampled => 3 * trained.config.batch_size,
        SequenceMode::FullGraph => n,
    })
}

fn embed(trained: &TrainedModel, g: &graphfm::graph::SparseGraph, args: &EvaluateArgs, seed: u64) -> Result<ndarray::Array2<f64>> {
    let cfg = &trained.config;
    embed_graph(
        &trained.model,
        g,
        cfg.tokens,
        trained.table.as_ref(),
        &cfg.tokenizer_config(),
        chunk_for(trained, args, g.num_nodes()),
        seed,
    )
}

fn eval_link(
    trained: &TrainedModel,
    ds: &Dataset,
    args: &EvaluateArgs,
    shots: Option<SplitSpec>,
    split_seed: u64,
    embed_seed: u64,
) -> Result<DatasetReport> {
    let (train, test) = if ds.test_edges.is_empty() {
        if args.holdout <= 0.0 {
            return Err(Error::Config("dataset has no test edges and --holdout is 0".into()));
        }
        link_holdout(&ds.graph, args.holdout, split_seed)?
    } else {
        (ds.graph.clone(), ds.test_edges.clone())
    };
    let train = match shots {
        Some(s) => s.apply_links(&train)?,
        None => train,
    };
    let emb = embed(trained, &train, args, embed_seed)?;
    let opts = RecallOptions {
        micro: args.micro,
        partition: if args.bipartite { ds.meta.partition } else { None },
    };
    let r = recall_at_n(emb.view(), &train, &test, &args.ns, &opts)?;
    let mut metrics = BTreeMap::new();
    for (n, v) in &r.recall {
        metrics.insert(format!("recall@{n}"), *v);
    }
    Ok(DatasetReport {
        metrics,
        queries: r.queries,
        skipped: r.skipped,
    })
}

fn eval_node(
    trained: &TrainedModel,
    ds: &Dataset,
    args: &EvaluateArgs,
    shots: Option<SplitSpec>,
    split_seed: u64,
    embed_seed: u64,
) -> Result<DatasetReport> {
    let g = &ds.graph;
    let classes = g
        .class_count()
        .ok_or_else(|| Error::Config("node task needs a labeled dataset".into()))?;
    let labeled: Vec<(u32, u32)> = g
        .labels()
        .unwrap_or_default()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| (i as u32, c)))
        .collect();
    let (train, test) = if ds.test_labels.is_empty() {
        if args.holdout <= 0.0 {
            return Err(Error::Config("dataset has no test labels and --holdout is 0".into()));
        }
        let mut shuffled = labeled;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
        let n_test = (shuffled.len() as f64 * args.holdout).round() as usize;
        let mut test = shuffled.split_off(shuffled.len() - n_test);
        shuffled.sort_unstable();
        test.sort_unstable();
        (shuffled, test)
    } else {
        (labeled, ds.test_labels.clone())
    };
    let train = match shots {
        Some(s) => s.apply_nodes(&train, classes)?,
        None => train,
    };
    let augmented = class_nodes_augment(g, &train, classes)?;
    let emb = embed(trained, &augmented, args, embed_seed)?;
    let nodes: Vec<u32> = test.iter().map(|p| p.0).collect();
    let truths: Vec<u32> = test.iter().map(|p| p.1).collect();
    let preds = classify_by_class_nodes(emb.view(), g.num_nodes(), classes, &nodes)?;
    let (acc, f1) = accuracy_macro_f1(&preds, &truths, classes)?;
    Ok(DatasetReport {
        metrics: BTreeMap::from([("accuracy".to_string(), acc), ("macro_f1".to_string(), f1)]),
        queries: nodes.len(),
        skipped: 0,
    })
}
