//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and a summary;
//! the process fails only if a check cannot run at all.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use graphfm::eval::{accuracy_macro_f1, recall_at_n, RecallOptions};
use graphfm::generator::{
    apply_locality, embed_profiles, generate_nodes, gibbs_sample, gibbs_sample_traced, GibbsConfig, NodeProfile,
    ProbabilityPool,
};
use graphfm::graph::{normalize_adjacency, SparseGraph};
use graphfm::pretrainer::{embed_nodes, TrainConfig, Trainer};
use graphfm::provider::{MockProvider, MockSpec};
use graphfm::tokenizer::{randomized_svd, smooth_apply, tokenize, tokenize_graph, TokenizerConfig};
use graphfm::transformer::{
    forward, forward_inference, gradients, sample_anchors, ModelConfig, TransformerModel,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(n, edges).unwrap()
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative error with NaN mapped to infinity so it can never pass.
fn rel_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    let e = frobenius(&(got - want)) / frobenius(want).max(1e-300);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// `D^-1/2 A D^-1/2` summed over powers 1..=order, all dense.
fn dense_smoothed(g: &SparseGraph, order: usize) -> Array2<f64> {
    let n = g.num_nodes();
    let mut a = Array2::<f64>::zeros((n, n));
    for (u, v) in g.edges() {
        a[[u as usize, v as usize]] = 1.0;
        a[[v as usize, u as usize]] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let mut norm = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if a[[i, j]] != 0.0 {
                norm[[i, j]] = 1.0 / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
    }
    let mut power = norm.clone();
    let mut acc = norm.clone();
    for _ in 1..order {
        power = power.dot(&norm);
        acc += &power;
    }
    acc
}

fn tokenizer_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = rng.random_range(10..=100);
        let g = random_graph(n, rng.random_range(0.03..0.2), &mut rng);
        let adj = normalize_adjacency(&g);
        for order in 1..=3 {
            let dense = dense_smoothed(&g, order);
            let x = Array2::from_shape_fn((n, 7), |_| rng.random::<f64>() - 0.5);
            let op = smooth_apply(&adj, x.view(), order).unwrap();
            let want = dense.dot(&x);
            worst = worst.max(rel_err(&op, &want));

            let cfg = TokenizerConfig {
                dim: 16,
                order,
                ..Default::default()
            };
            let (p, table) = tokenize_graph(&g, &cfg, i).unwrap();
            let want = dense.dot(&p.matrix);
            worst = worst.max(rel_err(&table.embeddings, &want));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 10.0,
        format!("max relative Frobenius error {worst:.2e}, {secs:.2} s"),
    )
}

fn svd_quality() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = |rng: &mut ChaCha8Rng| {
            let (a, b): (f64, f64) = (rng.random::<f64>().max(1e-12), rng.random());
            (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
        };
        let left = Array2::from_shape_fn((200, 8), |_| gauss(&mut rng));
        let right = Array2::from_shape_fn((8, 200), |_| gauss(&mut rng));
        let noise = Array2::from_shape_fn((200, 200), |_| 0.1 * gauss(&mut rng));
        let m = left.dot(&right) + noise;

        let f = randomized_svd(&m, 16, 2, 10, seed).unwrap();
        let approx = frobenius(&(&m - &f.reconstruct()));

        let na = nalgebra::DMatrix::from_fn(200, 200, |i, j| m[[i, j]]);
        let svd = na.svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let exact = s[16..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = approx / exact;
        worst = if ratio.is_nan() { f64::INFINITY } else { worst.max(ratio) };
    }
    outcome(worst <= 1.1, format!("worst error ratio to exact truncated SVD {worst:.4}"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let (d, b, s, h, layers) = (8, 4, 2, 2, 2);
    let n = 3 * b;
    let mut cfg = ModelConfig::new(d, layers, h);
    cfg.anchors = s;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut m = TransformerModel::<f64>::new(cfg, &mut rng).unwrap();
    for t in m.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random::<f64>() * 0.2 - 0.1;
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let w = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let anchors: Vec<Vec<usize>> = (0..layers).map(|_| sample_anchors(n, s, &mut rng).unwrap()).collect();
    let (_, cache) = forward(&m, x.view(), &anchors).unwrap();
    let (grads, _) = gradients(&m, Some(&cache), w.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.named_tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
    let names: Vec<String> = m.named_tensors().into_iter().map(|t| t.0).collect();
    let loss = |m: &TransformerModel<f64>| (forward_inference(m, x.view(), &anchors).unwrap() * &w).sum();
    let step = 1e-5;
    let mut worst = (0.0f64, String::new());
    for (ti, name) in names.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..analytic[ti].len() {
            let mut mp = m.clone();
            mp.tensors_mut()[ti][k] += step;
            let mut mm = m.clone();
            mm.tensors_mut()[ti][k] -= step;
            let fd = (loss(&mp) - loss(&mm)) / (2.0 * step);
            num += (fd - analytic[ti][k]).powi(2);
            den += fd * fd;
        }
        let rel = num.sqrt() / den.sqrt().max(1e-12);
        if rel > worst.0 {
            worst = (rel, name.clone());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-4 && secs < 30.0,
        format!("{} tensors, worst relative error {:.2e} ({}), {secs:.2} s", names.len(), worst.0, worst.1),
    )
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_graph(100, 0.05, &mut rng);
    // One fixed projector: refreshing it mid-run re-rotates the token basis.
    let cfg = TrainConfig {
        dim: 64,
        layers: 1,
        heads: 4,
        anchors: 32,
        batch_size: 1024,
        learning_rate: 3e-3,
        projector_refresh_every: 1_000_000,
        max_steps: 500,
        seed: 1,
        ..Default::default()
    };
    let mut t = Trainer::new(vec![g.clone()], cfg).unwrap();
    let losses: Vec<f64> = (0..500).map(|_| t.train_step().unwrap().loss).collect();
    let tokens = tokenize(&g, t.projector(0).unwrap()).unwrap().embeddings;
    let emb = embed_nodes(&t.model, tokens.view(), 100, 0).unwrap();
    let train_edges: Vec<(u32, u32)> = g.edges().filter(|(u, v)| u < v).collect();
    let r = recall_at_n(emb.view(), &SparseGraph::empty(100), &train_edges, &[20], &RecallOptions::default())
        .unwrap()
        .at(20)
        .unwrap();
    let ma: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let rises = ma.windows(2).filter(|w| w[1] > w[0]).count();
    let blocks: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let block_rises = blocks.windows(2).filter(|w| w[1] > w[0]).count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r >= 0.9 && rises == 0 && secs < 120.0,
        format!(
            "train Recall@20 {r:.3}, loss {:.4} -> {:.4}, sliding 10-step average rises {rises}/{}, \
             10-step block average rises {block_rises}/{}, {secs:.1} s",
            ma[0],
            ma[ma.len() - 1],
            ma.len() - 1,
            blocks.len() - 1
        ),
    )
}

fn generator_statistics() -> Outcome {
    let start = Instant::now();
    let mock = MockProvider::new(MockSpec {
        children_per_node: 10,
        cluster_count: 2,
        seed: 3,
        ..Default::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut profiles = generate_nodes("products", "online retail", 4, &mock, 7, &mut rng).unwrap();
    embed_profiles(&mut profiles, &mock).unwrap();
    let n = profiles.len();
    let cluster: Vec<usize> = profiles.iter().map(|p| mock.cluster_of(&p.text)).collect();

    // (a) one sweep against a probability table built from scratch
    let sweep = GibbsConfig {
        max_steps: n as u64,
        thin: u64::MAX / 2,
        burn_in: Some(0),
        shift_period: Some(250),
        ..Default::default()
    };
    let (_, trace) = gibbs_sample_traced(&profiles, &sweep, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mut active = vec![false; n];
    for &m in &trace.starts[0].1 {
        active[m as usize] = true;
    }
    let dot = |a: &NodeProfile, b: &NodeProfile| a.embedding.iter().zip(&b.embedding).map(|(x, y)| x * y).sum::<f64>();
    let mut history: Vec<f64> = Vec::new();
    let mut mismatches = 0;
    for s in &trace.steps {
        let cand = (s.t % n as u64) as usize;
        let members: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let p = members.iter().map(|&i| dot(&profiles[i], &profiles[cand])).sum::<f64>() / members.len() as f64;
        let p_bar = if history.is_empty() {
            0.5
        } else {
            let mu = history.iter().sum::<f64>() / history.len() as f64;
            let sd = (history.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / history.len() as f64).sqrt();
            if sd <= 1e-9 {
                0.5
            } else {
                ((p - mu) / (4.0 * sd)).clamp(0.0, 1.0)
            }
        };
        let loc = (trace.initial_locality + ((s.t - 1) / 250) as usize) % 7;
        let p_hat = p_bar * 0.95f64.powi(loc.abs_diff(profiles[cand].locality) as i32);
        let accept = s.u < p_hat;
        if s.candidate as usize != cand || (s.p_hat - p_hat).abs() > 1e-9 || s.accepted != accept {
            mismatches += 1;
        }
        history.push(p);
        if accept {
            active[cand] = true;
        }
    }
    let a_ok = mismatches == 0 && trace.steps.len() == n;

    // (b) and (c) over a long chain
    let long = GibbsConfig {
        max_steps: 400_000,
        thin: 1000,
        ..Default::default()
    };
    let samples = gibbs_sample(&profiles, &long, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let (mut same, mut cross, mut gap, mut pairs) = (0u64, 0u64, 0.0, 0.0);
    for s in &samples {
        for (x, &i) in s.iter().enumerate() {
            for &j in &s[x + 1..] {
                let (i, j) = (i as usize, j as usize);
                if cluster[i] == cluster[j] {
                    same += 1;
                } else {
                    cross += 1;
                }
                gap += profiles[i].locality.abs_diff(profiles[j].locality) as f64;
                pairs += 1.0;
            }
        }
    }
    let n0 = cluster.iter().filter(|&&c| c == 0).count() as f64;
    let n1 = n as f64 - n0;
    let same_rate = same as f64 / (n0 * (n0 - 1.0) / 2.0 + n1 * (n1 - 1.0) / 2.0);
    let cross_rate = cross as f64 / (n0 * n1);
    let (mut all_gap, mut all_pairs) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            all_gap += profiles[i].locality.abs_diff(profiles[j].locality) as f64;
            all_pairs += 1.0;
        }
    }
    let co_gap = gap / pairs;
    let base_gap = all_gap / all_pairs;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        a_ok && same_rate > cross_rate && co_gap < base_gap && secs < 120.0,
        format!(
            "{n} nodes, {} samples; sweep mismatches {mismatches}; co-selection same {same_rate:.2e} vs cross {cross_rate:.2e}; \
             locality gap {co_gap:.4} vs random {base_gap:.4}; {secs:.1} s",
            samples.len()
        ),
    )
}

fn normalization_identities() -> Outcome {
    let mut pool = ProbabilityPool::new(100, 0.5);
    pool.normalize(0.0);
    pool.normalize(1.0);
    let quarter = pool.normalize(1.0);
    let mut pool = ProbabilityPool::new(100, 0.5);
    pool.normalize(0.0);
    pool.normalize(1.0);
    let half = pool.normalize(0.5 + 2.0 * 0.5);
    let same = [0.0, 0.3, 0.77, 1.0].iter().all(|&p| apply_locality(p, 4, 4, 0.95) == p);
    outcome(
        quarter == 0.25 && half == 0.5 && same,
        format!("pool {{0,1}}: p=1 -> {quarter}, p=mu+2sigma -> {half}; zero gap identity {same}"),
    )
}

fn recall_oracle(emb: &Array2<f64>, train: &SparseGraph, test: &[(u32, u32)], n_cut: usize, partition: Option<usize>) -> f64 {
    let n = emb.nrows();
    let mut truth = vec![Vec::new(); n];
    for &(u, v) in test {
        truth[u as usize].push(v);
        truth[v as usize].push(u);
    }
    let mut total = 0.0;
    let mut count = 0;
    for q in 0..n {
        if truth[q].is_empty() {
            continue;
        }
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for c in 0..n {
            if c == q || train.has_edge(q as u32, c as u32) {
                continue;
            }
            if let Some(p) = partition {
                if (q < p) == (c < p) {
                    continue;
                }
            }
            let s: f64 = (0..emb.ncols()).map(|k| emb[[q, k]] * emb[[c, k]]).sum();
            cands.push((s, c));
        }
        if cands.is_empty() {
            continue;
        }
        // Bubble sort: score descending, id ascending.
        for i in 0..cands.len() {
            for j in 0..cands.len() - 1 - i {
                let (a, b) = (cands[j], cands[j + 1]);
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    cands.swap(j, j + 1);
                }
            }
        }
        let mut t = truth[q].clone();
        t.sort();
        t.dedup();
        let hits = cands.iter().take(n_cut).filter(|(_, c)| t.contains(&(*c as u32))).count();
        total += hits as f64 / t.len() as f64;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut recall_bad = 0;
    for i in 0..50 {
        let n = rng.random_range(6..30);
        let full = random_graph(n, 0.3, &mut rng);
        let mut train_edges = Vec::new();
        let mut test = Vec::new();
        for (u, v) in full.edges().filter(|(u, v)| u < v) {
            if rng.random::<f64>() < 0.3 {
                test.push((u, v));
            } else {
                train_edges.push((u, v));
            }
        }
        let train = SparseGraph::from_edges(n, train_edges).unwrap();
        // Small integer entries make ties common.
        let emb = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2..=2) as f64);
        let partition = (i % 3 == 0).then(|| n / 2);
        let cut = rng.random_range(1..8);
        let got = recall_at_n(
            emb.view(),
            &train,
            &test,
            &[cut],
            &RecallOptions {
                micro: false,
                partition,
            },
        )
        .unwrap()
        .at(cut)
        .unwrap();
        if got != recall_oracle(&emb, &train, &test, cut, partition) {
            recall_bad += 1;
        }
    }
    let mut cls_bad = 0;
    for _ in 0..50 {
        let classes = rng.random_range(2..6);
        let len = rng.random_range(1..40);
        let truths: Vec<u32> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        let preds: Vec<u32> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        let (acc, f1) = accuracy_macro_f1(&preds, &truths, classes as usize).unwrap();
        let mut confusion = vec![vec![0usize; classes as usize]; classes as usize];
        for (&p, &t) in preds.iter().zip(&truths) {
            confusion[t as usize][p as usize] += 1;
        }
        let want_acc = (0..classes as usize).map(|c| confusion[c][c]).sum::<usize>() as f64 / len as f64;
        let mut f1_sum = 0.0;
        for c in 0..classes as usize {
            let tp = confusion[c][c];
            let predicted: usize = (0..classes as usize).map(|t| confusion[t][c]).sum();
            let actual: usize = confusion[c].iter().sum();
            if predicted + actual > 0 {
                f1_sum += 2.0 * tp as f64 / (predicted + actual) as f64;
            }
        }
        let want_f1 = f1_sum / classes as f64;
        if acc != want_acc || f1 != want_f1 {
            cls_bad += 1;
        }
    }
    outcome(
        recall_bad == 0 && cls_bad == 0,
        format!("recall mismatches {recall_bad}/50, accuracy/macro-F1 mismatches {cls_bad}/50"),
    )
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_graphfm"))
}

fn graphfm(cwd: &Path, args: &[&str]) -> bool {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .map(|o| {
            if !o.status.success() {
                eprintln!("graphfm {:?} failed:\n{}", args, String::from_utf8_lossy(&o.stderr));
            }
            o.status.success()
        })
        .unwrap_or(false)
}

fn generate_mock(cwd: &Path, out: &str, seed: &str, root: &str) -> bool {
    graphfm(
        cwd,
        &[
            "generate", "--out", out, "--seed", seed, "--root", root, "--children", "10", "--depth", "4", "--mode",
            "entity-entity", "--thin", "200", "--max-steps", "20000", "--name", out,
        ],
    )
}

fn zero_shot_smoke() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let ok = generate_mock(cwd, "a", "1", "products")
        && generate_mock(cwd, "b", "2", "movies")
        && generate_mock(cwd, "c", "3", "books")
        && graphfm(
            cwd,
            &[
                "pretrain", "--data", "a", "--data", "b", "--out", "ck", "--seed", "0", "--dim", "128", "--layers", "2",
                "--steps", "2000", "--batch-size", "256", "--anchors", "64", "--lr", "1e-3",
            ],
        )
        && graphfm(cwd, &["evaluate", "--checkpoint", "ck", "--data", "c", "--out", "ev", "--ns", "20"]);
    if !ok {
        return outcome(false, "pipeline command failed");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(cwd.join("ev/report.json")).unwrap()).unwrap();
    let recall = report["datasets"]["c"]["metrics"]["recall@20"].as_f64().unwrap_or(0.0);
    let n = 1000.0;
    // Candidates per query exclude the query and its training neighbors.
    let train = graphfm::graph::read_dataset(cwd.join("c")).unwrap().graph;
    let mean_deg = 2.0 * train.num_edges() as f64 / n;
    let baseline = 20.0 / (n - 1.0 - mean_deg * 0.8);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        recall >= 3.0 * baseline && secs <= 900.0,
        format!("Recall@20 {recall:.4} vs random {baseline:.4} ({:.1}x), {secs:.0} s", recall / baseline),
    )
}

fn memory_ablation() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let n = 50_000u32;
    let mut text = format!("#nodes {n}\n");
    let mut edges = std::collections::BTreeSet::new();
    while edges.len() < 200_000 {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    for (u, v) in edges {
        text.push_str(&format!("{u}\t{v}\n"));
    }
    std::fs::write(cwd.join("big.tsv"), text).unwrap();
    let ok = graphfm(
        cwd,
        &[
            "ablate", "--data", "big.tsv", "--out", "ab", "--variant", "full,-Seq", "--dim", "128", "--layers", "2",
            "--steps", "3", "--batch-size", "1024", "--anchors", "128",
        ],
    );
    if !ok {
        return outcome(false, "ablation run failed");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(cwd.join("ab/ablation.json")).unwrap()).unwrap();
    let peak = |variant: &str| {
        report["runs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["variant"] == variant)
            .and_then(|r| r["peak_rss_mib"].as_f64())
    };
    match (peak("full"), peak("-Seq")) {
        (Some(s), Some(f)) => outcome(
            s <= 0.67 * f,
            format!("peak RSS sampled {s:.0} MiB vs full sequence {f:.0} MiB (ratio {:.3})", s / f),
        ),
        _ => outcome(false, "peak memory not recorded"),
    }
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    let mut ok = generate_mock(cwd, "g", "4", "garden")
        && generate_mock(cwd, "h", "5", "tools")
        && graphfm(
            cwd,
            &[
                "generate", "--out", "gi", "--seed", "6", "--children", "6", "--depth", "3", "--thin", "50",
                "--max-steps", "4000", "--inject-topology", "--inject-epochs", "5", "--densify", "1",
            ],
        )
        && graphfm(
            cwd,
            &[
                "pretrain", "--data", "g", "--out", "ck", "--seed", "2", "--dim", "32", "--layers", "1", "--steps", "25",
                "--batch-size", "64", "--anchors", "16", "--lr", "1e-3",
            ],
        )
        && graphfm(cwd, &["evaluate", "--checkpoint", "ck", "--data", "h", "--out", "ev", "--seed", "3"]);
    let mut replayed = 0;
    for dir in ["g", "gi", "ck", "ev"] {
        let again = format!("{dir}-replay");
        if graphfm(cwd, &["replay", "--manifest", dir, "--out", &again]) {
            replayed += 1;
        } else {
            ok = false;
        }
    }
    outcome(ok && replayed == 4, format!("{replayed}/4 manifests replayed bit-identically"))
}

fn main() {
    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("tokenizer matches dense oracle", tokenizer_oracle),
        ("randomized SVD quality", svd_quality),
        ("gradients match finite differences", gradient_check),
        ("overfit toy graph", overfit),
        ("generator statistics", generator_statistics),
        ("normalization and locality identities", normalization_identities),
        ("zero-shot smoke", zero_shot_smoke),
        ("memory of sequence sampling vs full sequence", memory_ablation),
        ("metric oracles", metric_oracles),
        ("manifest replay reproducibility", reproducibility),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    let mut total = 0;
    for (i, (name, check)) in checks.into_iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let r = check();
        println!("criterion {:>2} {}: {} ({})", i + 1, if r.pass { "PASS" } else { "FAIL" }, name, r.detail);
        failed += usize::from(!r.pass);
        total += 1;
    }
    println!("acceptance: {} passed, {failed} failed", total - failed);
}
