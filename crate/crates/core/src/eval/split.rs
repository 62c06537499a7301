use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Original,
    KShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub k: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn original() -> Self {
        Self {
            mode: SplitMode::Original,
            k: 0,
            seed: 0,
        }
    }

    pub fn k_shot(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k-shot splits need k >= 1".into()));
        }
        Ok(Self {
            mode: SplitMode::KShot,
            k,
            seed,
        })
    }

    pub fn apply_nodes(&self, labels: &[(u32, u32)], class_count: usize) -> Result<Vec<(u32, u32)>> {
        match self.mode {
            SplitMode::Original => Ok(labels.to_vec()),
            SplitMode::KShot => make_k_shot_nodes(labels, class_count, self.k, self.seed),
        }
    }

    pub fn apply_links(&self, g: &SparseGraph) -> Result<SparseGraph> {
        match self.mode {
            SplitMode::Original => Ok(g.clone()),
            SplitMode::KShot => make_k_shot_links(g, self.k, self.seed),
        }
    }
}

/// Keeps at most `k` labeled nodes per class, chosen uniformly at random. Output is sorted by node.
pub fn make_k_shot_nodes(labels: &[(u32, u32)], class_count: usize, k: usize, seed: u64) -> Result<Vec<(u32, u32)>> {
    if k == 0 {
        return Err(Error::Config("k-shot splits need k >= 1".into()));
    }
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); class_count];
    for &(node, class) in labels {
        let slot = by_class.get_mut(class as usize).ok_or(Error::Bounds {
            index: class as u64,
            num_nodes: class_count,
        })?;
        slot.push(node);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (class, mut nodes) in by_class.into_iter().enumerate() {
        if nodes.is_empty() {
            log::warn!("class {class} has no labeled nodes");
            continue;
        }
        nodes.sort_unstable();
        nodes.shuffle(&mut rng);
        out.extend(nodes.into_iter().take(k).map(|u| (u, class as u32)));
    }
    out.sort_unstable();
    Ok(out)
}

/// Keeps at most `k` links per node: a greedy pass over the edges in shuffled order.
pub fn make_k_shot_links(g: &SparseGraph, k: usize, seed: u64) -> Result<SparseGraph> {
    if k == 0 {
        return Err(Error::Config("k-shot splits need k >= 1".into()));
    }
    let mut edges: Vec<(u32, u32)> = g.edges().filter(|(u, v)| u < v).collect();
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut count = vec![0usize; g.num_nodes()];
    let kept: Vec<(u32, u32)> = edges
        .into_iter()
        .filter(|&(u, v)| {
            if count[u as usize] < k && count[v as usize] < k {
                count[u as usize] += 1;
                count[v as usize] += 1;
                true
            } else {
                false
            }
        })
        .collect();
    SparseGraph::from_edges(g.num_nodes(), kept)
}

/// Moves a random `fraction` of the edges out of `g` into a test list.
pub fn link_holdout(g: &SparseGraph, fraction: f64, seed: u64) -> Result<(SparseGraph, Vec<(u32, u32)>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let mut edges: Vec<(u32, u32)> = g.edges().filter(|(u, v)| u < v).collect();
    edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (edges.len() as f64 * fraction).round() as usize;
    let mut test = edges.split_off(edges.len() - n_test);
    test.sort_unstable();
    let train = SparseGraph::from_edges(g.num_nodes(), edges)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::tests::random_graph;

    #[test]
    fn saturated_k_keeps_everything() {
        let labels = vec![(0, 0), (1, 1), (2, 0), (5, 2)];
        assert_eq!(make_k_shot_nodes(&labels, 3, 10, 1).unwrap(), labels);
        let g = random_graph(20, 0.2, 1);
        let max_deg = *g.degree_vector().iter().max().unwrap();
        let kept = make_k_shot_links(&g, max_deg, 4).unwrap();
        assert_eq!(kept.num_edges(), g.num_edges());
    }

    #[test]
    fn one_shot_three_classes() {
        let labels: Vec<(u32, u32)> = (0..30).map(|i| (i, i % 3)).collect();
        let kept = make_k_shot_nodes(&labels, 3, 1, 9).unwrap();
        assert_eq!(kept.len(), 3);
        let mut classes: Vec<u32> = kept.iter().map(|p| p.1).collect();
        classes.sort();
        assert_eq!(classes, vec![0, 1, 2]);
        assert!(kept.iter().all(|p| labels.contains(p)));
        assert_eq!(make_k_shot_nodes(&labels[..2], 3, 1, 9).unwrap().len(), 2);
    }

    #[test]
    fn link_k_shot_degree_scan() {
        for seed in 0..5 {
            let g = random_graph(80, 0.2, seed);
            let kept = make_k_shot_links(&g, 5, seed).unwrap();
            assert!(kept.degree_vector().iter().all(|&d| d <= 5));
            assert!(kept.edges().all(|(u, v)| g.has_edge(u, v)));
            // Greedy maximality: every dropped edge has a saturated endpoint.
            let deg = kept.degree_vector();
            for (u, v) in g.edges() {
                if !kept.has_edge(u, v) {
                    assert!(deg[u as usize] == 5 || deg[v as usize] == 5);
                }
            }
        }
    }

    #[test]
    fn holdout_partitions_edges() {
        let g = random_graph(40, 0.2, 3);
        let (train, test) = link_holdout(&g, 0.2, 3).unwrap();
        assert_eq!(train.num_edges() + test.len(), g.num_edges());
        assert!(test.iter().all(|&(u, v)| g.has_edge(u, v) && !train.has_edge(u, v)));
        assert!(SplitSpec::k_shot(0, 0).is_err());
    }
}
