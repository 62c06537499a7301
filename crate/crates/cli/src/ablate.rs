use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Args;
use graphfm::eval::{EvalReport, DEFAULT_RECALL_NS};
use graphfm::pretrainer::{SequenceMode, TokenSource, TrainConfig};
use graphfm::transformer::AttentionKind;
use graphfm::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::evaluate::REPORT_FILE;
use crate::manifest::{Run, RunManifest, RunStatus, MANIFEST_FILE};
use crate::Global;

pub const ABLATION_FILE: &str = "ablation.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    /// Full-graph sequence and quadratic attention.
    #[serde(rename = "-S-A")]
    NoSamplingNoAnchor,
    /// Quadratic attention over the sampled sequence.
    #[serde(rename = "-Anc")]
    NoAnchor,
    /// Anchor attention over the full-graph sequence.
    #[serde(rename = "-Seq")]
    NoSampling,
}

impl Variant {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Variant::Full),
            "-S-A" | "no-sa" => Ok(Variant::NoSamplingNoAnchor),
            "-Anc" | "no-anc" => Ok(Variant::NoAnchor),
            "-Seq" | "no-seq" => Ok(Variant::NoSampling),
            _ => Err(format!("unknown variant {s:?} (full, -S-A, -Anc, -Seq)")),
        }
    }

    fn sequence(self) -> SequenceMode {
        match self {
            Variant::Full | Variant::NoAnchor => SequenceMode::Sampled,
            Variant::NoSamplingNoAnchor | Variant::NoSampling => SequenceMode::FullGraph,
        }
    }

    fn attention(self) -> AttentionKind {
        match self {
            Variant::Full | Variant::NoSampling => AttentionKind::Anchor,
            Variant::NoSamplingNoAnchor | Variant::NoAnchor => AttentionKind::Full,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSamplingNoAnchor => "-S-A",
            Variant::NoAnchor => "-Anc",
            Variant::NoSampling => "-Seq",
        }
    }
}

/// A list of values to sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep(pub Vec<usize>);

/// `a..b` (inclusive) or a comma list.
fn parse_range(s: &str) -> std::result::Result<Sweep, String> {
    parse_values(s).map(Sweep)
}

fn parse_values(s: &str) -> std::result::Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{s}: {e}"))?;
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("{s}: {e}")))
        .collect()
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Training graph(s).
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Datasets to evaluate every trained variant on.
    #[arg(long)]
    eval_data: Vec<PathBuf>,
    /// Model variants: full, -S-A, -Anc, -Seq (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = Variant::parse, default_value = "full")]
    variant: Vec<Variant>,
    /// Smoothing orders, e.g. `0..3` or `1,3`.
    #[arg(long, value_parser = parse_range)]
    smoothing: Option<Sweep>,
    /// Token sources: projection, one-hot, degree, random.
    #[arg(long, value_delimiter = ',', value_parser = config::parse_enum::<TokenSource>)]
    projection: Vec<TokenSource>,
    #[arg(long, value_parser = parse_range)]
    layers: Option<Sweep>,
    #[arg(long, value_parser = parse_range)]
    dim: Option<Sweep>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    anchors: Option<usize>,
    /// Largest graph allowed for full-graph sequence variants.
    #[arg(long, default_value_t = 100_000)]
    max_full_nodes: usize,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RECALL_NS.to_vec())]
    ns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub name: String,
    pub variant: Variant,
    pub order: usize,
    pub tokens: TokenSource,
    pub layers: usize,
    pub dim: usize,
    pub status: String,
    pub peak_rss_mib: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub final_loss: Option<f64>,
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRecord>,
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.runs.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        writeln!(f, "{:<w$}  {:>8}  {:>10}  {:>9}  {:>10}  metrics", "run", "status", "peak MiB", "seconds", "loss")?;
        for r in &self.runs {
            let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
            let metrics: Vec<String> = r
                .metrics
                .iter()
                .flat_map(|(ds, m)| m.iter().map(move |(k, v)| format!("{ds}:{k}={v:.4}")))
                .collect();
            writeln!(
                f,
                "{:<w$}  {:>8}  {:>10}  {:>9}  {:>10}  {}",
                r.name,
                r.status,
                opt(r.peak_rss_mib, 1),
                opt(r.wall_seconds, 2),
                opt(r.final_loss, 6),
                metrics.join(" ")
            )?;
        }
        Ok(())
    }
}

fn final_loss(dir: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("losses.csv")).ok()?;
    text.lines().skip(1).last()?.split(',').nth(1)?.parse().ok()
}

fn child(global: &Global, args: &[String]) -> Result<bool> {
    let exe = std::env::current_exe()?;
    let mut cmd = Command::new(exe);
    cmd.args(args);
    if let Some(c) = &global.config {
        cmd.arg("--config").arg(c);
    }
    log::debug!("spawning {:?}", cmd);
    Ok(cmd.status()?.success())
}

pub fn run(global: &Global, args: AblateArgs) -> Result<u8> {
    let out = global.out()?;
    let seed = global.seed.unwrap_or(0);
    let base: TrainConfig = config::load(global.config.as_deref())?;
    let orders = args.smoothing.clone().map_or(vec![base.order], |s| s.0);
    let tokens = if args.projection.is_empty() { vec![base.tokens] } else { args.projection.clone() };
    let layers = args.layers.clone().map_or(vec![base.layers], |s| s.0);
    let dims = args.dim.clone().map_or(vec![base.dim], |s| s.0);

    let mut inputs = Vec::new();
    let mut largest = 0;
    for p in args.data.iter().chain(&args.eval_data) {
        let (ds, rec) = config::load_graph_input(p)?;
        if args.data.contains(p) {
            largest = largest.max(ds.graph.num_nodes());
        }
        inputs.push(rec);
    }
    #[derive(Serialize)]
    struct Plan<'a> {
        variants: Vec<&'static str>,
        orders: &'a [usize],
        tokens: &'a [TokenSource],
        layers: &'a [usize],
        dims: &'a [usize],
        steps: Option<u64>,
        batch_size: Option<usize>,
        max_full_nodes: usize,
        seed: u64,
    }
    let value = config::announce(
        "ablate",
        &Plan {
            variants: args.variant.iter().map(|v| v.label()).collect(),
            orders: &orders,
            tokens: &tokens,
            layers: &layers,
            dims: &dims,
            steps: args.steps,
            batch_size: args.batch_size,
            max_full_nodes: args.max_full_nodes,
            seed,
        },
    )?;
    let mut run = Run::start("ablate", &out, value, BTreeMap::from([("seed".to_string(), seed)]), inputs)?;
    run.exclude_outputs(&[ABLATION_FILE]);
    let result = sweep(global, &args, &out, seed, largest, &orders, &tokens, &layers, &dims);
    run.finish(result)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    global: &Global,
    args: &AblateArgs,
    out: &Path,
    seed: u64,
    largest: usize,
    orders: &[usize],
    tokens: &[TokenSource],
    layers: &[usize],
    dims: &[usize],
) -> Result<u8> {
    let abs = |p: &PathBuf| config::absolute(p).to_string_lossy().into_owned();
    let mut records = Vec::new();
    let mut failures = 0;
    for &variant in &args.variant {
        for &order in orders {
            for &tok in tokens {
                for &l in layers {
                    for &d in dims {
                        let tok_name = serde_json::to_value(tok)?.as_str().unwrap_or("tokens").to_string();
                        let name = format!("{}_L{order}_{tok_name}_l{l}_d{d}", variant.label().trim_start_matches('-'));
                        let dir = out.join("runs").join(&name);
                        let mut rec = AblationRecord {
                            name: name.clone(),
                            variant,
                            order,
                            tokens: tok,
                            layers: l,
                            dim: d,
                            status: "ok".into(),
                            peak_rss_mib: None,
                            wall_seconds: None,
                            final_loss: None,
                            metrics: BTreeMap::new(),
                        };
                        if variant.sequence() == SequenceMode::FullGraph && largest > args.max_full_nodes {
                            log::warn!("{name}: skipped, {largest} nodes exceed --max-full-nodes {}", args.max_full_nodes);
                            rec.status = "skipped".into();
                            records.push(rec);
                            continue;
                        }
                        let mut a: Vec<String> = vec!["pretrain".into()];
                        for p in &args.data {
                            a.extend(["--data".into(), abs(p)]);
                        }
                        a.extend([
                            "--out".into(),
                            abs(&dir),
                            "--seed".into(),
                            seed.to_string(),
                            "--order".into(),
                            order.to_string(),
                            "--tokens".into(),
                            tok_name.clone(),
                            "--layers".into(),
                            l.to_string(),
                            "--dim".into(),
                            d.to_string(),
                            "--sequence".into(),
                            serde_json::to_value(variant.sequence())?.as_str().unwrap().into(),
                            "--attention".into(),
                            serde_json::to_value(variant.attention())?.as_str().unwrap().into(),
                        ]);
                        let optional = [
                            ("--steps", args.steps.map(|v| v.to_string())),
                            ("--batch-size", args.batch_size.map(|v| v.to_string())),
                            ("--lr", args.lr.map(|v| v.to_string())),
                            ("--heads", args.heads.map(|v| v.to_string())),
                            ("--anchors", args.anchors.map(|v| v.to_string())),
                        ];
                        for (flag, v) in optional {
                            if let Some(v) = v {
                                a.extend([flag.to_string(), v]);
                            }
                        }
                        log::info!("ablation run {name}");
                        let ok = child(global, &a)?;
                        if let Ok(m) = RunManifest::read(&dir.join(MANIFEST_FILE)) {
                            rec.peak_rss_mib = m.peak_rss_mib;
                            rec.wall_seconds = m.wall_seconds;
                            if m.status != RunStatus::Ok {
                                rec.status = "failed".into();
                            }
                        }
                        if !ok {
                            rec.status = "failed".into();
                        }
                        rec.final_loss = final_loss(&dir);
                        if rec.status == "ok" && !args.eval_data.is_empty() {
                            let eval_dir = out.join("runs").join(format!("{name}-eval"));
                            let mut e: Vec<String> =
                                vec!["evaluate".into(), "--checkpoint".into(), abs(&dir), "--out".into(), abs(&eval_dir)];
                            for p in &args.eval_data {
                                e.extend(["--data".into(), abs(p)]);
                            }
                            e.extend([
                                "--seed".into(),
                                seed.to_string(),
                                "--ns".into(),
                                args.ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
                            ]);
                            if child(global, &e)? {
                                let report = EvalReport::read(eval_dir.join(REPORT_FILE))?;
                                rec.metrics = report.datasets.into_iter().map(|(k, v)| (k, v.metrics)).collect();
                            } else {
                                rec.status = "eval-failed".into();
                            }
                        }
                        if rec.status != "ok" {
                            failures += 1;
                        }
                        records.push(rec);
                    }
                }
            }
        }
    }
    let report = AblationReport { runs: records };
    std::fs::write(out.join(ABLATION_FILE), serde_json::to_string_pretty(&report)?)?;
    print!("{report}");
    if failures > 0 {
        return Err(Error::State(format!("{failures} ablation runs failed")));
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_variants() {
        assert_eq!(parse_range("0..3").unwrap(), Sweep(vec![0, 1, 2, 3]));
        assert_eq!(parse_range("1,3").unwrap(), Sweep(vec![1, 3]));
        assert!(parse_range("3..1").is_err());
        let v = Variant::parse("-Seq").unwrap();
        assert_eq!((v.sequence(), v.attention()), (SequenceMode::FullGraph, AttentionKind::Anchor));
        let v = Variant::parse("-S-A").unwrap();
        assert_eq!((v.sequence(), v.attention()), (SequenceMode::FullGraph, AttentionKind::Full));
        let v = Variant::parse("-Anc").unwrap();
        assert_eq!((v.sequence(), v.attention()), (SequenceMode::Sampled, AttentionKind::Full));
        assert!(Variant::parse("-X").is_err());
    }
}
