use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use graphfm::pretrainer::{SequenceMode, TokenSource, TrainConfig, Trainer};
use graphfm::transformer::AttentionKind;
use graphfm::{Error, Result};

use crate::config::{self, set};
use crate::manifest::Run;
use crate::Global;

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Training graph: a dataset directory or an edge list. Repeat for several graphs.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Total optimization steps (0 writes the initialized checkpoint only).
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Adjacency smoothing order (0 feeds the identity matrix to the projection).
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    ffn_dim: Option<usize>,
    #[arg(long)]
    power_iters: Option<usize>,
    #[arg(long)]
    refresh_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, value_parser = config::parse_enum::<AttentionKind>)]
    attention: Option<AttentionKind>,
    #[arg(long, value_parser = config::parse_enum::<TokenSource>)]
    tokens: Option<TokenSource>,
    #[arg(long, value_parser = config::parse_enum::<SequenceMode>)]
    sequence: Option<SequenceMode>,
    /// Recompute tokens on the masked graph at every step.
    #[arg(long)]
    strict_mae: bool,
    /// Continue the run saved in the output directory.
    #[arg(long)]
    resume: bool,
}

fn resolve(global: &Global, a: &PretrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = config::load(global.config.as_deref())?;
    set(&mut cfg.seed, global.seed);
    set(&mut cfg.max_steps, a.steps);
    set(&mut cfg.dim, a.dim);
    set(&mut cfg.order, a.order);
    set(&mut cfg.layers, a.layers);
    set(&mut cfg.heads, a.heads);
    set(&mut cfg.anchors, a.anchors);
    set(&mut cfg.batch_size, a.batch_size);
    set(&mut cfg.learning_rate, a.lr);
    set(&mut cfg.l2_lambda, a.l2);
    set(&mut cfg.power_iters, a.power_iters);
    set(&mut cfg.projector_refresh_every, a.refresh_every);
    set(&mut cfg.checkpoint_every, a.checkpoint_every);
    set(&mut cfg.attention, a.attention);
    set(&mut cfg.tokens, a.tokens);
    set(&mut cfg.sequence, a.sequence);
    if a.ffn_dim.is_some() {
        cfg.ffn_dim = a.ffn_dim;
    }
    cfg.strict_mae |= a.strict_mae;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(global: &Global, args: PretrainArgs) -> Result<u8> {
    let out = global.out()?;
    let mut graphs = Vec::new();
    let mut inputs = Vec::new();
    for path in &args.data {
        let (ds, record) = config::load_graph_input(path)?;
        if ds.graph.num_edges() == 0 {
            return Err(Error::Config(format!("{} has no edges", path.display())));
        }
        graphs.push(ds.graph);
        inputs.push(record);
    }
    let cfg = if args.resume {
        let saved = out.join("train_config.json");
        if !saved.exists() {
            return Err(Error::Config(format!("nothing to resume in {}", out.display())));
        }
        let mut saved: TrainConfig = serde_json::from_str(&std::fs::read_to_string(saved)?)?;
        set(&mut saved.max_steps, args.steps);
        saved
    } else {
        resolve(global, &args)?
    };
    let value = config::announce("pretrain", &cfg)?;
    let seeds = BTreeMap::from([("seed".to_string(), cfg.seed)]);
    let run = Run::start("pretrain", &out, value, seeds, inputs)?;
    let result = (|| {
        let mut trainer = if args.resume {
            let mut t = Trainer::resume(graphs, &out)?;
            t.cfg.max_steps = cfg.max_steps;
            t
        } else {
            Trainer::new(graphs, cfg)?
        };
        trainer.run(Some(&out))
    })();
    run.finish(result).map(|_| 0)
}
