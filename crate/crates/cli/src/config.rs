use std::path::{Path, PathBuf};

use graphfm::graph::{load_edge_list, read_dataset, Dataset, DatasetMeta, InputFormat};
use graphfm::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::{hash_path, InputRecord};

/// Parses a kebab-case enum value through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Reads a config file, TOML unless the extension is `.json`; missing path gives the default.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Prints the resolved config to stderr and returns it as JSON for the manifest.
pub fn announce<T: Serialize>(command: &str, cfg: &T) -> Result<serde_json::Value> {
    let value = serde_json::to_value(cfg)?;
    eprintln!("{command} config:\n{}", serde_json::to_string_pretty(&value)?);
    Ok(value)
}

/// Overwrites `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// A dataset directory, or a bare edge list wrapped as one.
pub fn load_graph_input(path: &Path) -> Result<(Dataset, InputRecord)> {
    if !path.exists() {
        return Err(Error::Config(format!("input {} does not exist", path.display())));
    }
    let ds = if path.is_dir() {
        read_dataset(path)?
    } else {
        let loaded = load_edge_list(path, InputFormat::TsvEdges)?;
        Dataset {
            meta: DatasetMeta {
                num_nodes: loaded.graph.num_nodes(),
                num_classes: None,
                partition: None,
                name: None,
            },
            graph: loaded.graph,
            test_edges: Vec::new(),
            test_labels: Vec::new(),
        }
    };
    let record = InputRecord {
        path: absolute(path),
        sha256: hash_path(path)?,
        graph_hash: Some(ds.graph.structure_hash()),
    };
    Ok((ds, record))
}

pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Name used in reports: the dataset's own name or the file stem.
pub fn dataset_name(path: &Path, meta: &DatasetMeta) -> String {
    meta.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    })
}
