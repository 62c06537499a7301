use std::collections::BTreeMap;

use clap::Args;
use graphfm::generator::{
    densify, embed_profiles, generate_nodes, gibbs_sample, inject_and_resample, write_generated,
    GeneratedGraph, GibbsConfig, InjectConfig, InteractionMode, DEFAULT_MAX_DEPTH,
};
use graphfm::pretrainer::derive_seed;
use graphfm::provider::ProviderConfig;
use graphfm::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{self, set};
use crate::manifest::Run;
use crate::Global;

const TAG_MOCK: u64 = 101;
const TAG_LOCALITY: u64 = 102;
const TAG_GIBBS: u64 = 103;
const TAG_INJECT: u64 = 104;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub root: String,
    pub scenario: String,
    pub depth: usize,
    /// Keep only the k-core of the final graph.
    pub densify: Option<usize>,
    pub inject_topology: bool,
    pub seed: u64,
    pub name: Option<String>,
    pub provider: ProviderConfig,
    pub gibbs: GibbsConfig,
    pub injection: InjectConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            root: "products".into(),
            scenario: "e-commerce platform like Amazon".into(),
            depth: DEFAULT_MAX_DEPTH,
            densify: None,
            inject_topology: false,
            seed: 0,
            name: None,
            provider: ProviderConfig::default(),
            gibbs: GibbsConfig::default(),
            injection: InjectConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Most general entity to subdivide.
    #[arg(long)]
    root: Option<String>,
    /// Application scenario given to the LLM.
    #[arg(long)]
    scenario: Option<String>,
    /// Depth of the entity tree (root is depth 1).
    #[arg(long)]
    depth: Option<usize>,
    /// Mock provider: children per node.
    #[arg(long)]
    children: Option<usize>,
    /// Mock provider: embedding width.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Mock provider: number of embedding clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, value_parser = config::parse_enum::<InteractionMode>)]
    mode: Option<InteractionMode>,
    #[arg(long)]
    localities: Option<usize>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    shift_period: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    initial_edges: Option<usize>,
    /// Keep one sampling chain instead of restarting after each sample.
    #[arg(long)]
    continuous: bool,
    /// Retrain embeddings on the first graph and sample a second one.
    #[arg(long)]
    inject_topology: bool,
    #[arg(long)]
    inject_epochs: Option<usize>,
    /// Keep only nodes of the k-core.
    #[arg(long)]
    densify: Option<usize>,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    chat_model: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    /// Dataset name stored in the output.
    #[arg(long)]
    name: Option<String>,
}

fn resolve(global: &Global, a: GenerateArgs) -> Result<GenerateConfig> {
    let mut cfg: GenerateConfig = config::load(global.config.as_deref())?;
    set(&mut cfg.root, a.root);
    set(&mut cfg.scenario, a.scenario);
    set(&mut cfg.depth, a.depth);
    set(&mut cfg.seed, global.seed);
    set(&mut cfg.provider.backend, global.provider);
    set(&mut cfg.provider.mock.children_per_node, a.children);
    set(&mut cfg.provider.mock.embedding_dim, a.embed_dim);
    set(&mut cfg.provider.mock.cluster_count, a.clusters);
    set(&mut cfg.gibbs.mode, a.mode);
    set(&mut cfg.gibbs.localities, a.localities);
    set(&mut cfg.gibbs.decay, a.decay);
    set(&mut cfg.gibbs.window, a.window);
    set(&mut cfg.gibbs.thin, a.thin);
    set(&mut cfg.gibbs.max_steps, a.max_steps);
    set(&mut cfg.gibbs.initial_edges, a.initial_edges);
    set(&mut cfg.injection.epochs, a.inject_epochs);
    if a.burn_in.is_some() {
        cfg.gibbs.burn_in = a.burn_in;
    }
    if a.shift_period.is_some() {
        cfg.gibbs.shift_period = a.shift_period;
    }
    cfg.gibbs.continuous |= a.continuous;
    cfg.inject_topology |= a.inject_topology;
    if a.densify.is_some() {
        cfg.densify = a.densify;
    }
    if a.base_url.is_some() {
        cfg.provider.base_url = a.base_url;
    }
    set(&mut cfg.provider.chat_model, a.chat_model);
    set(&mut cfg.provider.embed_model, a.embed_model);
    if a.name.is_some() {
        cfg.name = a.name;
    }
    cfg.provider.mock.seed = derive_seed(cfg.seed, TAG_MOCK, 0);
    cfg.gibbs.seed = derive_seed(cfg.seed, TAG_GIBBS, 0);
    cfg.injection.seed = derive_seed(cfg.seed, TAG_INJECT, 0);
    cfg.gibbs.validate()?;
    cfg.provider.validate()?;
    if cfg.densify == Some(0) {
        return Err(Error::Config("--densify needs k >= 1".into()));
    }
    Ok(cfg)
}

pub fn run(global: &Global, args: GenerateArgs) -> Result<u8> {
    let cfg = resolve(global, args)?;
    let out = global.out()?;
    let value = config::announce("generate", &cfg)?;
    let seeds = BTreeMap::from([
        ("seed".to_string(), cfg.seed),
        ("mock".to_string(), cfg.provider.mock.seed),
        ("locality".to_string(), derive_seed(cfg.seed, TAG_LOCALITY, 0)),
        ("gibbs".to_string(), cfg.gibbs.seed),
        ("inject".to_string(), cfg.injection.seed),
    ]);
    let run = Run::start("generate", &out, value, seeds, Vec::new())?;
    let result = pipeline(&cfg, &out);
    run.finish(result).map(|_| 0)
}

fn pipeline(cfg: &GenerateConfig, out: &std::path::Path) -> Result<()> {
    let provider = cfg.provider.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_LOCALITY, 0));
    let mut profiles = generate_nodes(
        &cfg.root,
        &cfg.scenario,
        cfg.depth,
        provider.as_ref(),
        cfg.gibbs.localities,
        &mut rng,
    )?;
    log::info!("generated {} leaf entities", profiles.len());
    embed_profiles(&mut profiles, provider.as_ref())?;
    let mut gibbs_rng = ChaCha8Rng::seed_from_u64(cfg.gibbs.seed);
    let interactions = gibbs_sample(&profiles, &cfg.gibbs, &mut gibbs_rng)?;
    let mut gen = GeneratedGraph {
        profiles,
        interactions,
        mode: cfg.gibbs.mode,
    };
    log::info!("sampled {} interaction records", gen.interactions.len());
    if cfg.inject_topology {
        write_generated(out.join("gen0"), &gen, cfg.name.as_deref())?;
        let mut resample = cfg.gibbs.clone();
        resample.seed = derive_seed(cfg.seed, TAG_GIBBS, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(resample.seed);
        gen = inject_and_resample(&gen, &cfg.injection, &resample, &mut rng)?;
        log::info!("resampled {} interaction records after topology injection", gen.interactions.len());
    }
    if let Some(k) = cfg.densify {
        let (dense, removed) = densify(&gen, k)?;
        log::info!("{k}-core kept {} entities, removed {removed}", dense.profiles.len());
        gen = dense;
    }
    let g = gen.to_graph()?;
    log::info!("graph: {} nodes, {} edges", g.num_nodes(), g.num_edges());
    write_generated(out, &gen, cfg.name.as_deref())
}
