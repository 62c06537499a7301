use std::collections::VecDeque;

use ndarray::{Array1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NodeProfile;
use crate::error::{Error, Result};

/// What one emitted interaction represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionMode {
    /// A person selecting a set of entities (bipartite output).
    PersonEntity,
    /// Entities linking to one active entity (homogeneous output).
    EntityEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub localities: usize,
    pub decay: f64,
    /// Normalization window `T'`.
    pub window: usize,
    /// Steps between emitted samples `T0`.
    pub thin: u64,
    /// First step eligible for emission `T1`; defaults to `thin`.
    pub burn_in: Option<u64>,
    /// Steps between locality rotations `T2`; defaults to `thin`.
    pub shift_period: Option<u64>,
    pub max_steps: u64,
    pub initial_edges: usize,
    pub seed: u64,
    /// Normalized probability used while the pool has no spread.
    pub sigma_fallback: f64,
    /// Keep one chain running instead of restarting after each emitted sample.
    pub continuous: bool,
    pub mode: InteractionMode,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            localities: 7,
            decay: 0.95,
            window: 5000,
            thin: 1000,
            burn_in: None,
            shift_period: None,
            max_steps: 100_000,
            initial_edges: 6,
            seed: 0,
            sigma_fallback: 0.5,
            continuous: false,
            mode: InteractionMode::PersonEntity,
        }
    }
}

impl GibbsConfig {
    pub fn burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.thin)
    }

    pub fn shift_period(&self) -> u64 {
        self.shift_period.unwrap_or(self.thin)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.localities == 0 {
            return bad("localities must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return bad(format!("decay {} outside [0, 1]", self.decay));
        }
        if self.window == 0 || self.thin == 0 || self.shift_period() == 0 {
            return bad("window, thin and shift_period must be positive".into());
        }
        if self.initial_edges == 0 {
            return bad("initial_edges must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.sigma_fallback) {
            return bad("sigma_fallback must lie in [0, 1]".into());
        }
        if self.max_steps < self.burn_in() {
            return bad(format!(
                "max_steps {} is below burn_in {}; no samples would be emitted",
                self.max_steps,
                self.burn_in()
            ));
        }
        Ok(())
    }
}

/// Mean embedding of the selected nodes dotted with the candidate's embedding.
pub fn edge_probability(a: &[bool], h: ArrayView2<'_, f64>, candidate: usize) -> Result<f64> {
    if a.len() != h.nrows() || candidate >= h.nrows() {
        return Err(Error::shape("incidence vector does not match embeddings"));
    }
    let count = a.iter().filter(|&&x| x).count();
    if count == 0 {
        return Err(Error::EmptyHistory);
    }
    let target = h.row(candidate);
    let sum: f64 = a
        .iter()
        .enumerate()
        .filter(|(_, &x)| x)
        .map(|(i, _)| h.row(i).dot(&target))
        .sum();
    Ok(sum / count as f64)
}

/// Sliding window of raw probabilities used to rescale new values.
#[derive(Debug, Clone)]
pub struct ProbabilityPool {
    values: VecDeque<f64>,
    window: usize,
    fallback: f64,
    sum: f64,
    sum_sq: f64,
    evictions: usize,
}

const SIGMA_FLOOR: f64 = 1e-9;

impl ProbabilityPool {
    pub fn new(window: usize, fallback: f64) -> Self {
        Self {
            values: VecDeque::with_capacity(window.min(1 << 16)),
            window: window.max(1),
            fallback,
            sum: 0.0,
            sum_sq: 0.0,
            evictions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Population mean and standard deviation of the pool.
    pub fn stats(&self) -> Option<(f64, f64)> {
        if self.values.is_empty() {
            return None;
        }
        let n = self.values.len() as f64;
        let mu = self.sum / n;
        Some((mu, (self.sum_sq / n - mu * mu).max(0.0).sqrt()))
    }

    /// `clamp((p − μ) / 4σ, 0, 1)` against the current pool, then records `p`.
    pub fn normalize(&mut self, p: f64) -> f64 {
        let out = match self.stats() {
            Some((mu, sigma)) if sigma > SIGMA_FLOOR => ((p - mu) / (4.0 * sigma)).clamp(0.0, 1.0),
            _ => self.fallback,
        };
        self.push(p);
        out
    }

    fn push(&mut self, p: f64) {
        self.values.push_back(p);
        self.sum += p;
        self.sum_sq += p * p;
        if self.values.len() > self.window {
            let old = self.values.pop_front().unwrap();
            self.sum -= old;
            self.sum_sq -= old * old;
            self.evictions += 1;
            if self.evictions >= self.window {
                self.evictions = 0;
                self.sum = self.values.iter().sum();
                self.sum_sq = self.values.iter().map(|v| v * v).sum();
            }
        }
    }
}

/// `p̄ · α^|n_i − n_j|`.
pub fn apply_locality(p_bar: f64, current: usize, candidate: usize, decay: f64) -> f64 {
    p_bar * decay.powi(current.abs_diff(candidate) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsStep {
    pub t: u64,
    pub candidate: u32,
    pub locality: usize,
    pub p: f64,
    pub p_bar: f64,
    pub p_hat: f64,
    pub u: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GibbsTrace {
    /// Chain states at `t = 0` and after every restart, with the step they start from.
    pub starts: Vec<(u64, Vec<u32>)>,
    pub initial_locality: usize,
    pub steps: Vec<GibbsStep>,
}

struct Chain {
    active: Vec<bool>,
    members: Vec<u32>,
    sum: Array1<f64>,
}

impl Chain {
    fn new(n: usize, d: usize) -> Self {
        Self {
            active: vec![false; n],
            members: Vec::new(),
            sum: Array1::zeros(d),
        }
    }

    fn reset(&mut self, h: ArrayView2<'_, f64>, members: Vec<u32>) {
        for &m in &self.members {
            self.active[m as usize] = false;
        }
        self.sum.fill(0.0);
        self.members.clear();
        for m in members {
            self.add(h, m);
        }
    }

    fn add(&mut self, h: ArrayView2<'_, f64>, i: u32) {
        if !self.active[i as usize] {
            self.active[i as usize] = true;
            self.members.push(i);
            self.sum += &h.row(i as usize);
        }
    }

    fn probability(&self, h: ArrayView2<'_, f64>, candidate: usize) -> f64 {
        self.sum.dot(&h.row(candidate)) / self.members.len() as f64
    }

    fn sorted_members(&self) -> Vec<u32> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m
    }
}

fn stack_embeddings(profiles: &[NodeProfile]) -> Result<ndarray::Array2<f64>> {
    let d = profiles.first().map_or(0, |p| p.embedding.len());
    if d == 0 || profiles.iter().any(|p| p.embedding.len() != d) {
        return Err(Error::shape("every profile needs an embedding of the same width"));
    }
    let flat: Vec<f64> = profiles.iter().flat_map(|p| p.embedding.iter().copied()).collect();
    ndarray::Array2::from_shape_vec((profiles.len(), d), flat).map_err(|e| Error::shape(e.to_string()))
}

/// Emits interactions by sweeping candidates and accepting each with its locality-decayed,
/// normalized probability.
pub fn gibbs_sample<R: Rng + ?Sized>(
    profiles: &[NodeProfile],
    cfg: &GibbsConfig,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    run(profiles, cfg, rng, None)
}

/// As [`gibbs_sample`], also returning every step of the chain.
pub fn gibbs_sample_traced<R: Rng + ?Sized>(
    profiles: &[NodeProfile],
    cfg: &GibbsConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<u32>>, GibbsTrace)> {
    let mut trace = GibbsTrace::default();
    let out = run(profiles, cfg, rng, Some(&mut trace))?;
    Ok((out, trace))
}

fn run<R: Rng + ?Sized>(
    profiles: &[NodeProfile],
    cfg: &GibbsConfig,
    rng: &mut R,
    mut trace: Option<&mut GibbsTrace>,
) -> Result<Vec<Vec<u32>>> {
    cfg.validate()?;
    let n = profiles.len();
    if n < 2 {
        return Err(Error::Config("at least two profiles are needed".into()));
    }
    if let Some(p) = profiles.iter().find(|p| p.locality >= cfg.localities) {
        return Err(Error::Config(format!(
            "profile {:?} has locality {} but only {} localities are configured",
            p.text, p.locality, cfg.localities
        )));
    }
    let entity = cfg.mode == InteractionMode::EntityEntity;
    let start_size = if entity { 1 } else { cfg.initial_edges };
    if start_size > n {
        return Err(Error::Config(format!("initial_edges {start_size} exceeds {n} nodes")));
    }
    let h = stack_embeddings(profiles)?;
    let h = h.view();

    let mut chain = Chain::new(n, h.ncols());
    let mut pool = ProbabilityPool::new(cfg.window, cfg.sigma_fallback);
    let draw_start = |rng: &mut R| -> Vec<u32> { sample(rng, n, start_size).into_iter().map(|i| i as u32).collect() };
    chain.reset(h, draw_start(rng));
    let initial_locality = rng.random_range(0..cfg.localities);
    if let Some(tr) = trace.as_deref_mut() {
        tr.starts.push((0, chain.members.clone()));
        tr.initial_locality = initial_locality;
    }

    let (burn_in, period) = (cfg.burn_in(), cfg.shift_period());
    let mut out = Vec::new();
    let mut pending: Vec<Vec<u32>> = Vec::new();
    for t in 1..=cfg.max_steps {
        let candidate = (t % n as u64) as usize;
        let anchor = chain.members[0] as usize;
        let current = if entity {
            profiles[anchor].locality
        } else {
            (initial_locality + ((t - 1) / period) as usize) % cfg.localities
        };
        let p = chain.probability(h, candidate);
        let p_bar = pool.normalize(p);
        let p_hat = apply_locality(p_bar, current, profiles[candidate].locality, cfg.decay);
        let u: f64 = rng.random();
        let accepted = u < p_hat;
        if accepted {
            if entity {
                if candidate != anchor {
                    pending.push(vec![anchor.min(candidate) as u32, anchor.max(candidate) as u32]);
                }
            } else {
                chain.add(h, candidate as u32);
            }
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.steps.push(GibbsStep {
                t,
                candidate: candidate as u32,
                locality: current,
                p,
                p_bar,
                p_hat,
                u,
                accepted,
            });
        }
        if t >= burn_in && t % cfg.thin == 0 {
            if entity {
                out.append(&mut pending);
            } else {
                out.push(chain.sorted_members());
            }
            if entity || !cfg.continuous {
                chain.reset(h, draw_start(rng));
                if let Some(tr) = trace.as_deref_mut() {
                    tr.starts.push((t, chain.members.clone()));
                }
            }
        } else if entity && t % cfg.thin == 0 {
            pending.clear();
            chain.reset(h, draw_start(rng));
            if let Some(tr) = trace.as_deref_mut() {
                tr.starts.push((t, chain.members.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::provider::{MockProvider, MockSpec, Provider};

    fn unit_rows(rows: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = Array2::from_shape_simple_fn((rows, d), || rng.random::<f64>() - 0.5);
        for mut r in h.rows_mut() {
            let n = r.dot(&r).sqrt();
            r /= n;
        }
        h
    }

    fn profiles_from(h: &Array2<f64>, localities: &[usize]) -> Vec<NodeProfile> {
        h.rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| NodeProfile {
                text: format!("n{i}"),
                path: vec![],
                locality: localities[i % localities.len()],
                embedding: r.to_vec(),
            })
            .collect()
    }

    #[test]
    fn probability_single_and_self() {
        let h = unit_rows(5, 4, 1);
        let mut a = vec![false; 5];
        a[2] = true;
        assert!((edge_probability(&a, h.view(), 4).unwrap() - h.row(2).dot(&h.row(4))).abs() < 1e-15);
        assert!((edge_probability(&a, h.view(), 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(edge_probability(&[false; 5], h.view(), 0), Err(Error::EmptyHistory)));
    }

    #[test]
    fn probability_matches_loop_oracle() {
        let h = unit_rows(10, 6, 2);
        let a: Vec<bool> = (0..10).map(|i| [1, 4, 7].contains(&i)).collect();
        for t in 0..10 {
            let mut acc = 0.0;
            for &i in &[1usize, 4, 7] {
                for k in 0..6 {
                    acc += h[[i, k]] / 3.0 * h[[t, k]];
                }
            }
            assert!((edge_probability(&a, h.view(), t).unwrap() - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_cases() {
        let mut pool = ProbabilityPool::new(10, 0.5);
        pool.normalize(0.0);
        pool.normalize(1.0);
        assert!((pool.normalize(1.0) - 0.25).abs() < 1e-15);

        let mut pool = ProbabilityPool::new(10, 0.5);
        for v in [0.2, 0.4, 0.6] {
            pool.normalize(v);
        }
        let (mu, sigma) = pool.stats().unwrap();
        let mut centered = pool.clone();
        assert!(centered.normalize(mu).abs() < 1e-12);
        let mut upper = pool.clone();
        assert!((upper.normalize(mu + 2.0 * sigma) - 0.5).abs() < 1e-12);
        assert_eq!(pool.normalize(mu - 0.1), 0.0);

        let mut flat = ProbabilityPool::new(10, 0.5);
        assert_eq!(flat.normalize(0.3), 0.5);
        assert_eq!(flat.normalize(0.3), 0.5);
        assert_eq!(flat.normalize(0.9), 0.5);
    }

    #[test]
    fn locality_decay() {
        assert_eq!(apply_locality(0.4, 3, 3, 0.95), 0.4);
        assert!((apply_locality(0.5, 0, 7, 0.95) - 0.5 * 0.95f64.powi(7)).abs() < 1e-15);
        assert!((apply_locality(0.5, 0, 7, 0.95) - 0.3492).abs() < 1e-4);
        assert_eq!(apply_locality(0.7, 0, 6, 1.0), 0.7);
        assert_eq!(apply_locality(0.7, 0, 1, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn pool_never_exceeds_window(window in 1usize..20, values in proptest::collection::vec(-1.0f64..1.0, 0..100)) {
            let mut pool = ProbabilityPool::new(window, 0.5);
            for v in values {
                let out = pool.normalize(v);
                prop_assert!((0.0..=1.0).contains(&out));
                prop_assert!(pool.len() <= window);
            }
        }

        #[test]
        fn decayed_probability_in_unit_interval(p in 0.0f64..=1.0, a in 0usize..10, b in 0usize..10, alpha in 0.0f64..=1.0) {
            let q = apply_locality(p, a, b, alpha);
            prop_assert!(q >= 0.0 && q <= p);
        }
    }

    #[test]
    fn burn_in_past_max_steps_is_config_error() {
        let h = unit_rows(4, 3, 0);
        let cfg = GibbsConfig {
            max_steps: 10,
            burn_in: Some(11),
            initial_edges: 1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            gibbs_sample(&profiles_from(&h, &[0]), &cfg, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_embeddings_accept_at_half() {
        let h = Array2::from_elem((8, 3), 1.0 / 3f64.sqrt());
        let cfg = GibbsConfig {
            localities: 1,
            max_steps: 200,
            thin: 50,
            initial_edges: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, trace) = gibbs_sample_traced(&profiles_from(&h, &[0]), &cfg, &mut rng).unwrap();
        assert_eq!(trace.steps.len(), 200);
        for s in &trace.steps {
            assert!((s.p - 1.0).abs() < 1e-12);
            assert_eq!(s.p_hat, 0.5);
        }
        let rate = trace.steps.iter().filter(|s| s.u < 0.5).count() as f64 / 200.0;
        assert!((rate - 0.5).abs() < 0.1);
    }

    #[test]
    fn zero_decay_is_a_locality_wall() {
        let h = unit_rows(12, 4, 5);
        let cfg = GibbsConfig {
            localities: 2,
            decay: 0.0,
            max_steps: 600,
            thin: 60,
            shift_period: Some(1_000_000),
            initial_edges: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profiles = profiles_from(&h, &[0, 1]);
        let (_, trace) = gibbs_sample_traced(&profiles, &cfg, &mut rng).unwrap();
        let mut blocked = 0;
        for s in &trace.steps {
            if profiles[s.candidate as usize].locality != s.locality {
                assert_eq!(s.p_hat, 0.0);
                assert!(!s.accepted);
                blocked += 1;
            }
        }
        assert_eq!(blocked, 300);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let h = unit_rows(30, 5, 6);
        let profiles = profiles_from(&h, &[0, 3, 6, 1]);
        let cfg = GibbsConfig {
            max_steps: 3000,
            thin: 100,
            ..Default::default()
        };
        let a = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let c = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a, c);
    }

    fn blob_profiles(n: usize, seed: u64) -> (Vec<NodeProfile>, Vec<usize>, MockProvider) {
        let mock = MockProvider::new(MockSpec {
            seed,
            ..Default::default()
        });
        let texts: Vec<String> = (0..n).map(|i| format!("item-{i}")).collect();
        let h = mock.embed(&texts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profiles = texts
            .iter()
            .zip(h.rows())
            .map(|(t, r)| NodeProfile {
                text: t.clone(),
                path: vec![],
                locality: rng.random_range(0..7),
                embedding: r.to_vec(),
            })
            .collect();
        let blobs = texts.iter().map(|t| mock.cluster_of(t)).collect();
        (profiles, blobs, mock)
    }

    #[test]
    fn one_sweep_matches_brute_force_table() {
        let (profiles, _, _) = blob_profiles(200, 3);
        let cfg = GibbsConfig {
            max_steps: 200,
            thin: 10_000,
            burn_in: Some(0),
            shift_period: Some(50),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, trace) = gibbs_sample_traced(&profiles, &cfg, &mut rng).unwrap();
        let mut active = vec![false; 200];
        for &m in &trace.starts[0].1 {
            active[m as usize] = true;
        }
        let mut history: Vec<f64> = Vec::new();
        for s in &trace.steps {
            let cand = (s.t % 200) as usize;
            assert_eq!(s.candidate as usize, cand);
            let members: Vec<usize> = (0..200).filter(|&i| active[i]).collect();
            let p = members
                .iter()
                .map(|&i| {
                    (0..profiles[i].embedding.len())
                        .map(|k| profiles[i].embedding[k] * profiles[cand].embedding[k])
                        .sum::<f64>()
                })
                .sum::<f64>()
                / members.len() as f64;
            let p_bar = if history.is_empty() {
                0.5
            } else {
                let mu = history.iter().sum::<f64>() / history.len() as f64;
                let var = history.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / history.len() as f64;
                if var.sqrt() <= 1e-9 {
                    0.5
                } else {
                    ((p - mu) / (4.0 * var.sqrt())).clamp(0.0, 1.0)
                }
            };
            let loc = (trace.initial_locality + ((s.t - 1) / 50) as usize) % 7;
            let d = (loc as i64 - profiles[cand].locality as i64).unsigned_abs() as i32;
            let p_hat = p_bar * 0.95f64.powi(d);
            assert!((s.p - p).abs() < 1e-12);
            assert!((s.p_bar - p_bar).abs() < 1e-9, "t={} {} vs {}", s.t, s.p_bar, p_bar);
            assert!((s.p_hat - p_hat).abs() < 1e-9);
            assert_eq!(s.locality, loc);
            assert_eq!(s.accepted, s.u < s.p_hat);
            history.push(p);
            if s.accepted {
                active[cand] = true;
            }
        }
    }

    #[test]
    fn same_blob_co_selection_dominates() {
        let (profiles, blobs, _) = blob_profiles(200, 3);
        let cfg = GibbsConfig {
            max_steps: 40_000,
            thin: 400,
            ..Default::default()
        };
        let out = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let (mut same, mut cross) = (0u64, 0u64);
        for inter in &out {
            for (x, &i) in inter.iter().enumerate() {
                for &j in &inter[x + 1..] {
                    if blobs[i as usize] == blobs[j as usize] {
                        same += 1;
                    } else {
                        cross += 1;
                    }
                }
            }
        }
        let n0 = blobs.iter().filter(|&&b| b == 0).count() as u64;
        let n1 = 200 - n0;
        let same_pairs = n0 * (n0 - 1) / 2 + n1 * (n1 - 1) / 2;
        let cross_pairs = n0 * n1;
        let same_rate = same as f64 / same_pairs as f64;
        let cross_rate = cross as f64 / cross_pairs as f64;
        assert!(same_rate > 2.0 * cross_rate, "same {same_rate} cross {cross_rate}");
    }

    #[test]
    fn co_selected_nodes_share_locality() {
        let (profiles, _, _) = blob_profiles(200, 5);
        let (mut all, mut pairs) = (0.0, 0.0);
        for i in 0..200 {
            for j in i + 1..200 {
                all += profiles[i].locality.abs_diff(profiles[j].locality) as f64;
                pairs += 1.0;
            }
        }
        let base = all / pairs;
        let cfg = GibbsConfig {
            max_steps: 200_000,
            thin: 400,
            ..Default::default()
        };
        for seed in 12..16 {
            let out = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (mut total, mut count) = (0.0, 0.0);
            for inter in &out {
                for (x, &i) in inter.iter().enumerate() {
                    for &j in &inter[x + 1..] {
                        total += profiles[i as usize].locality.abs_diff(profiles[j as usize].locality) as f64;
                        count += 1.0;
                    }
                }
            }
            let co = total / count;
            assert!(co < base - 0.005, "seed {seed}: co-selected {co} vs uniform {base}");
        }
    }

    #[test]
    fn entity_mode_emits_pairs() {
        let (profiles, _, _) = blob_profiles(50, 2);
        let cfg = GibbsConfig {
            max_steps: 500,
            thin: 50,
            mode: InteractionMode::EntityEntity,
            ..Default::default()
        };
        let out = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|p| p.len() == 2 && p[0] < p[1] && (p[1] as usize) < 50));
    }

    #[test]
    fn continuous_chain_grows_monotonically() {
        let (profiles, _, _) = blob_profiles(60, 4);
        let cfg = GibbsConfig {
            max_steps: 600,
            thin: 60,
            continuous: true,
            ..Default::default()
        };
        let out = gibbs_sample(&profiles, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for w in out.windows(2) {
            assert!(w[0].iter().all(|x| w[1].contains(x)));
        }
    }
}
