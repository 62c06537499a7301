//! Synthetic graph generation from a text provider: node tree, Gibbs edge sampling,
//! topology injection and densification.

mod densify;
mod gibbs;
mod inject;
mod io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::provider::Provider;

pub use densify::{densify, k_core};
pub use gibbs::{
    apply_locality, edge_probability, gibbs_sample, gibbs_sample_traced, GibbsConfig, GibbsStep, GibbsTrace,
    InteractionMode, ProbabilityPool,
};
pub use inject::{inject_and_resample, inject_topology, InjectConfig};
pub use io::{read_generated, write_generated, EMBEDDINGS_FILE, GENERATION_FILE, PROFILES_FILE};

/// Default maximum depth of the prompt tree.
pub const DEFAULT_MAX_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub text: String,
    /// Ancestors from the root down to the parent.
    pub path: Vec<String>,
    pub locality: usize,
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

/// Depth-first expansion of `root` into leaf entities. The root sits at depth 1 and any
/// node at depth `max_depth` (or with no children) is a leaf.
pub fn generate_nodes<R: Rng + ?Sized>(
    root: &str,
    scenario: &str,
    max_depth: usize,
    provider: &dyn Provider,
    localities: usize,
    rng: &mut R,
) -> Result<Vec<NodeProfile>> {
    if root.trim().is_empty() {
        return Err(Error::Config("root entity must not be empty".into()));
    }
    if max_depth == 0 || localities == 0 {
        return Err(Error::Config("max_depth and localities must be positive".into()));
    }
    let mut out = Vec::new();
    let mut path = Vec::new();
    let walk = Walk {
        scenario,
        max_depth,
        provider,
        localities,
    };
    match walk.expand(root, 1, &mut path, &mut out, rng) {
        Ok(()) => Ok(out),
        Err(e) => Err(Error::PartialTree {
            completed: out,
            source: Box::new(e),
        }),
    }
}

struct Walk<'a> {
    scenario: &'a str,
    max_depth: usize,
    provider: &'a dyn Provider,
    localities: usize,
}

impl Walk<'_> {
    fn expand<R: Rng + ?Sized>(
        &self,
        node: &str,
        depth: usize,
        path: &mut Vec<String>,
        out: &mut Vec<NodeProfile>,
        rng: &mut R,
    ) -> Result<()> {
        let children = if depth >= self.max_depth {
            Vec::new()
        } else {
            self.provider.subdivide(node, self.scenario)?
        };
        if children.is_empty() {
            out.push(NodeProfile {
                text: node.to_string(),
                path: path.clone(),
                locality: rng.random_range(0..self.localities),
                embedding: Vec::new(),
            });
            return Ok(());
        }
        path.push(node.to_string());
        for child in &children {
            self.expand(child, depth + 1, path, out, rng)?;
        }
        path.pop();
        Ok(())
    }
}

/// Fills every profile's embedding with the provider's unit-normalized vector.
pub fn embed_profiles(profiles: &mut [NodeProfile], provider: &dyn Provider) -> Result<()> {
    if profiles.is_empty() {
        return Ok(());
    }
    let texts: Vec<String> = profiles.iter().map(|p| p.text.clone()).collect();
    let h = provider.embed(&texts)?;
    if h.nrows() != profiles.len() {
        return Err(Error::Provider(format!(
            "asked for {} embeddings, received {}",
            profiles.len(),
            h.nrows()
        )));
    }
    for (p, row) in profiles.iter_mut().zip(h.rows()) {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("embedding of {:?} has norm {norm}", p.text)));
        }
        p.embedding = row.iter().map(|v| v / norm).collect();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedGraph {
    pub profiles: Vec<NodeProfile>,
    /// Person mode: sorted entity sets, one per person. Entity mode: edge pairs.
    pub interactions: Vec<Vec<u32>>,
    pub mode: InteractionMode,
}

impl GeneratedGraph {
    pub fn validate(&self) -> Result<()> {
        let n = self.profiles.len();
        for inter in &self.interactions {
            if let Some(&bad) = inter.iter().find(|&&i| i as usize >= n) {
                return Err(Error::Bounds {
                    index: bad as u64,
                    num_nodes: n,
                });
            }
            if self.mode == InteractionMode::EntityEntity && inter.len() != 2 {
                return Err(Error::shape("entity interactions must be pairs"));
            }
        }
        Ok(())
    }

    /// Number of graph nodes: entities, plus one node per person in person mode.
    pub fn num_graph_nodes(&self) -> usize {
        match self.mode {
            InteractionMode::PersonEntity => self.profiles.len() + self.interactions.len(),
            InteractionMode::EntityEntity => self.profiles.len(),
        }
    }

    /// Entities keep their indices; persons follow them.
    pub fn to_graph(&self) -> Result<SparseGraph> {
        let n = self.profiles.len();
        match self.mode {
            InteractionMode::PersonEntity => SparseGraph::from_edges(
                self.num_graph_nodes(),
                self.interactions
                    .iter()
                    .enumerate()
                    .flat_map(|(k, inter)| inter.iter().map(move |&e| ((n + k) as u32, e))),
            ),
            InteractionMode::EntityEntity => {
                SparseGraph::from_edges(n, self.interactions.iter().map(|p| (p[0], p[1])))
            }
        }
    }

    pub fn embeddings(&self) -> Result<ndarray::Array2<f64>> {
        let d = self.profiles.first().map_or(0, |p| p.embedding.len());
        if d == 0 || self.profiles.iter().any(|p| p.embedding.len() != d) {
            return Err(Error::shape("profiles lack consistent embeddings"));
        }
        let flat: Vec<f64> = self.profiles.iter().flat_map(|p| p.embedding.iter().copied()).collect();
        ndarray::Array2::from_shape_vec((self.profiles.len(), d), flat).map_err(|e| Error::shape(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::provider::{render_prompt, MockProvider, MockSpec};

    struct Recording {
        inner: MockProvider,
        prompts: Mutex<Vec<String>>,
        fail_on: Option<String>,
    }

    impl Provider for Recording {
        fn subdivide(&self, node: &str, scenario: &str) -> Result<Vec<String>> {
            self.prompts.lock().unwrap().push(render_prompt(node, scenario));
            if self.fail_on.as_deref() == Some(node) {
                return Err(Error::Provider("boom".into()));
            }
            self.inner.subdivide(node, scenario)
        }
        fn embed(&self, texts: &[String]) -> Result<Array2<f64>> {
            self.inner.embed(texts)
        }
    }

    fn recording(fail_on: Option<&str>) -> Recording {
        Recording {
            inner: MockProvider::new(MockSpec::default()),
            prompts: Mutex::new(Vec::new()),
            fail_on: fail_on.map(String::from),
        }
    }

    #[test]
    fn depth_one_returns_root() {
        let p = MockProvider::new(MockSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = generate_nodes("products", "shop", 1, &p, 7, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "products");
        assert!(out[0].path.is_empty());
    }

    #[test]
    fn three_children_depth_three_gives_nine_leaves() {
        let p = MockProvider::new(MockSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = generate_nodes("products", "shop", 3, &p, 7, &mut rng).unwrap();
        assert_eq!(out.len(), 9);
        assert_eq!(out[0].text, "products/sub-0/sub-0");
        assert_eq!(out[8].text, "products/sub-2/sub-2");
        assert_eq!(out[4].path, vec!["products", "products/sub-1"]);
        assert!(out.iter().all(|p| p.locality < 7));
    }

    #[test]
    fn root_prompt_uses_template() {
        let r = recording(None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        generate_nodes("products", "e-commerce platform like Amazon", 2, &r, 7, &mut rng).unwrap();
        let prompts = r.prompts.lock().unwrap();
        assert_eq!(prompts.len(), 1);
        assert!(prompts[0].contains("List sub-categories of products"));
        assert!(prompts[0].contains("e-commerce platform like Amazon"));
    }

    #[test]
    fn empty_subdivision_is_leaf() {
        let p = MockProvider::new(MockSpec {
            children_per_node: 0,
            ..Default::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(generate_nodes("x", "y", 5, &p, 7, &mut rng).unwrap().len(), 1);
    }

    #[test]
    fn provider_failure_keeps_completed_leaves() {
        let r = recording(Some("products/sub-1"));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match generate_nodes("products", "shop", 3, &r, 7, &mut rng) {
            Err(Error::PartialTree { completed, source }) => {
                assert_eq!(completed.len(), 3);
                assert!(completed.iter().all(|p| p.text.starts_with("products/sub-0/")));
                assert!(matches!(*source, Error::Provider(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embeddings_are_unit() {
        let p = MockProvider::new(MockSpec::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut nodes = generate_nodes("a", "b", 3, &p, 7, &mut rng).unwrap();
        embed_profiles(&mut nodes, &p).unwrap();
        for n in &nodes {
            let norm: f64 = n.embedding.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn person_mode_graph_layout() {
        let profile = |t: &str| NodeProfile {
            text: t.into(),
            path: vec![],
            locality: 0,
            embedding: vec![1.0],
        };
        let g = GeneratedGraph {
            profiles: vec![profile("a"), profile("b"), profile("c")],
            interactions: vec![vec![0, 2], vec![1]],
            mode: InteractionMode::PersonEntity,
        };
        g.validate().unwrap();
        let sg = g.to_graph().unwrap();
        assert_eq!(sg.num_nodes(), 5);
        assert_eq!(sg.neighbors(3), &[0, 2]);
        assert_eq!(sg.neighbors(4), &[1]);
        let bad = GeneratedGraph {
            interactions: vec![vec![3]],
            ..g
        };
        assert!(matches!(bad.validate(), Err(Error::Bounds { index: 3, .. })));
    }
}
