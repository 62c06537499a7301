use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("node index {index} out of bounds for {num_nodes} nodes")]
    Bounds { index: u64, num_nodes: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid smoothing order {0}; use the identity-input ablation flag for order 0")]
    InvalidOrder(usize),

    #[error("rank {rank} exceeds matrix size {size}")]
    Rank { rank: usize, size: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite attention logits in layer {layer}")]
    NonFiniteLogits { layer: usize },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("node {0} has more than one label")]
    DuplicateLabel(u32),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("node {0} not found")]
    Lookup(u32),

    #[error("state error: {0}")]
    State(String),

    #[error("edge ({0}, {1}) is not present in the graph")]
    Mask(u32, u32),

    #[error("non-finite loss at step {step} on graph {graph} (batch seed {batch_seed})")]
    NonFiniteLoss {
        step: u64,
        graph: usize,
        batch_seed: u64,
    },

    #[error("empty interaction history")]
    EmptyHistory,

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("graph has no class nodes")]
    MissingClassNodes,

    #[error("provider error: {0}")]
    Provider(String),

    #[error("unparseable completion: {raw:?}")]
    Format { raw: String },

    #[error("node generation stopped after {} leaves: {source}", .completed.len())]
    PartialTree {
        completed: Vec<crate::generator::NodeProfile>,
        #[source]
        source: Box<Error>,
    },

    #[error("bad file format in {path}: {message}")]
    FileFormat { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.into(),
            message: message.into(),
        }
    }
}
