//! Text-generation and embedding backends.

mod http;
mod limiter;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use http::{HttpProvider, ResponseCache, Transport, TransportError, UreqTransport};
pub use limiter::{Clock, FakeClock, RateLimiter, SystemClock};

/// Environment variable holding the API key unless configured otherwise.
pub const DEFAULT_KEY_ENV: &str = "OPENGRAPH_API_KEY";

pub trait Provider: Send + Sync {
    /// Child entity names for `node`, possibly empty.
    fn subdivide(&self, node: &str, scenario: &str) -> Result<Vec<String>>;
    /// One row per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Array2<f64>>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn subdivide(&self, node: &str, scenario: &str) -> Result<Vec<String>> {
        (**self).subdivide(node, scenario)
    }
    fn embed(&self, texts: &[String]) -> Result<Array2<f64>> {
        (**self).embed(texts)
    }
}

/// Prompt asking for the sub-categories of `node` within `scenario`.
pub fn render_prompt(node: &str, scenario: &str) -> String {
    format!(
        "You are helping build a realistic graph of entities for the following scenario: {scenario}.\n\
         List sub-categories of {node}. Each sub-category must be a more specific kind of {node} \
         that appears in this scenario.\n\
         Answer with a JSON array of strings and nothing else. \
         Return an empty array if {node} cannot be divided further."
    )
}

/// Accepts a JSON array of strings or a dash/numbered list, one item per line.
pub fn parse_completion(raw: &str) -> Result<Vec<String>> {
    let text = raw.trim();
    let text = text
        .strip_prefix("```json")
        .or_else(|| text.strip_prefix("```"))
        .and_then(|t| t.strip_suffix("```"))
        .map(str::trim)
        .unwrap_or(text);
    if text.is_empty() {
        return Ok(Vec::new());
    }
    if text.starts_with('[') {
        let items: Vec<String> = serde_json::from_str(text).map_err(|_| Error::Format {
            raw: raw.to_string(),
        })?;
        return Ok(items
            .into_iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect());
    }
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let item = list_item(line).ok_or_else(|| Error::Format {
            raw: raw.to_string(),
        })?;
        out.push(item.to_string());
    }
    Ok(out)
}

fn list_item(line: &str) -> Option<&str> {
    let rest = if let Some(r) = line.strip_prefix(['-', '*', '•']) {
        r
    } else {
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        line[digits..].strip_prefix(['.', ')'])?
    };
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let item = rest.trim();
    (!item.is_empty()).then_some(item)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSpec {
    pub children_per_node: usize,
    pub embedding_dim: usize,
    pub cluster_count: usize,
    /// Standard deviation of the per-text offset from its cluster center (as a fraction of unit norm).
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MockSpec {
    fn default() -> Self {
        Self {
            children_per_node: 3,
            embedding_dim: 32,
            cluster_count: 2,
            jitter: 0.5,
            seed: 0,
        }
    }
}

/// Offline provider with deterministic outputs.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub spec: MockSpec,
    centers: Array2<f64>,
}

fn text_hash(seed: u64, text: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    h.finalize().into()
}

fn normalize_row(mut row: ndarray::ArrayViewMut1<'_, f64>) {
    let norm = row.dot(&row).sqrt();
    if norm > 0.0 {
        row /= norm;
    }
}

impl MockProvider {
    pub fn new(spec: MockSpec) -> Self {
        let k = spec.cluster_count.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d6f636b);
        let mut centers =
            Array2::from_shape_simple_fn((k, spec.embedding_dim), || StandardNormal.sample(&mut rng));
        for row in centers.rows_mut() {
            normalize_row(row);
        }
        Self { spec, centers }
    }

    /// Cluster a text is assigned to.
    pub fn cluster_of(&self, text: &str) -> usize {
        let h = text_hash(self.spec.seed, text);
        (u64::from_le_bytes(h[..8].try_into().unwrap()) % self.centers.nrows() as u64) as usize
    }
}

impl Provider for MockProvider {
    fn subdivide(&self, node: &str, _scenario: &str) -> Result<Vec<String>> {
        if node.is_empty() {
            return Err(Error::Provider("cannot subdivide an empty node".into()));
        }
        Ok((0..self.spec.children_per_node)
            .map(|i| format!("{node}/sub-{i}"))
            .collect())
    }

    fn embed(&self, texts: &[String]) -> Result<Array2<f64>> {
        if texts.is_empty() {
            return Err(Error::Provider("nothing to embed".into()));
        }
        let d = self.spec.embedding_dim;
        let scale = self.spec.jitter / (d as f64).sqrt();
        let mut out = Array2::zeros((texts.len(), d));
        for (mut row, text) in out.rows_mut().into_iter().zip(texts) {
            let h = text_hash(self.spec.seed, text);
            let mut rng = ChaCha8Rng::from_seed(h);
            row.assign(&self.centers.row(self.cluster_of(text)));
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += scale * z;
            }
            normalize_row(row);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub backend: Backend,
    pub base_url: Option<String>,
    pub api_key_env: String,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub requests_per_minute: u32,
    pub embed_batch: usize,
    pub cache_dir: Option<std::path::PathBuf>,
    pub mock: MockSpec,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            base_url: None,
            api_key_env: DEFAULT_KEY_ENV.to_string(),
            chat_model: "gpt-4o-mini".to_string(),
            embed_model: "text-embedding-3-small".to_string(),
            timeout_secs: 60,
            max_retries: 3,
            requests_per_minute: 60,
            embed_batch: 256,
            cache_dir: None,
            mock: MockSpec::default(),
        }
    }
}

impl ProviderConfig {
    /// Checks that the chosen backend can run: HTTP needs a URL and the key variable set.
    pub fn validate(&self) -> Result<()> {
        if self.backend == Backend::Http {
            if self.base_url.as_deref().is_none_or(str::is_empty) {
                return Err(Error::Config("http provider requires a base URL".into()));
            }
            if std::env::var(&self.api_key_env).map_or(true, |v| v.is_empty()) {
                return Err(Error::Config(format!(
                    "environment variable {} is not set",
                    self.api_key_env
                )));
            }
        }
        if self.embed_batch == 0 || self.requests_per_minute == 0 {
            return Err(Error::Config("embed_batch and requests_per_minute must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Provider>> {
        self.validate()?;
        Ok(match self.backend {
            Backend::Mock => Box::new(MockProvider::new(self.mock)),
            Backend::Http => Box::new(HttpProvider::new(
                self.clone(),
                UreqTransport::new(self.timeout_secs),
                SystemClock::new(),
            )?),
        })
    }
}
