//! Edge-list and dataset-directory formats.
//!
//! A dataset directory holds:
//! - `edges.tsv`: `src<TAB>dst` per line, optional `#nodes N` header
//! - `features.bin`: 8-byte magic `GFMFEAT1`, rows and cols as little-endian
//!   `u32`, then row-major little-endian `f32` values
//! - `labels.tsv`: `node<TAB>class` for labeled (training) nodes
//! - `meta.json`: node count, class count and optional bipartite boundary
//! - `test_edges.tsv` / `test_labels.tsv`: optional held-out evaluation data

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SparseGraph;
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 8] = b"GFMFEAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    TsvEdges,
    DatasetDir,
}

/// A loaded graph plus the original ids when the input ids were sparse.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: SparseGraph,
    /// `id_map[dense] = original`; `None` when ids were already dense.
    pub id_map: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    #[serde(default)]
    pub num_classes: Option<usize>,
    /// Nodes `< partition` form one side of a bipartite graph.
    #[serde(default)]
    pub partition: Option<usize>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub graph: SparseGraph,
    pub test_edges: Vec<(u32, u32)>,
    pub test_labels: Vec<(u32, u32)>,
}

struct RawEdges {
    declared: Option<usize>,
    pairs: Vec<(u64, u64)>,
}

fn parse_edges(path: &Path) -> Result<RawEdges> {
    let reader = BufReader::new(File::open(path)?);
    let mut declared = None;
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(n) = rest.strip_prefix("nodes") {
                let n = n.trim().parse::<usize>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    message: format!("bad node-count header: {e}"),
                })?;
                declared = Some(n);
            }
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected two node ids, got {trimmed:?}"),
            });
        };
        let parse = |s: &str| {
            s.parse::<u64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("bad node id {s:?}: {e}"),
            })
        };
        pairs.push((parse(a)?, parse(b)?));
    }
    Ok(RawEdges { declared, pairs })
}

fn dense_pairs(pairs: &[(u64, u64)], num_nodes: usize) -> Result<Vec<(u32, u32)>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            for x in [u, v] {
                if x >= num_nodes as u64 {
                    return Err(Error::Bounds {
                        index: x,
                        num_nodes,
                    });
                }
            }
            Ok((u as u32, v as u32))
        })
        .collect()
}

fn load_tsv(path: &Path) -> Result<LoadedGraph> {
    let raw = parse_edges(path)?;
    if let Some(n) = raw.declared {
        let edges = dense_pairs(&raw.pairs, n)?;
        return Ok(LoadedGraph {
            graph: SparseGraph::from_edges(n, edges)?,
            id_map: None,
        });
    }
    let ids: BTreeSet<u64> = raw.pairs.iter().flat_map(|&(u, v)| [u, v]).collect();
    let max = ids.iter().next_back().map_or(0, |&m| m + 1) as usize;
    if max == ids.len() {
        let edges = dense_pairs(&raw.pairs, max)?;
        return Ok(LoadedGraph {
            graph: SparseGraph::from_edges(max, edges)?,
            id_map: None,
        });
    }
    let id_map: Vec<u64> = ids.into_iter().collect();
    let lookup = |x: u64| id_map.binary_search(&x).expect("id collected above") as u32;
    let edges: Vec<(u32, u32)> = raw
        .pairs
        .iter()
        .map(|&(u, v)| (lookup(u), lookup(v)))
        .collect();
    Ok(LoadedGraph {
        graph: SparseGraph::from_edges(id_map.len(), edges)?,
        id_map: Some(id_map),
    })
}

/// Loads a graph from an edge-list file or a dataset directory.
pub fn load_edge_list(path: impl AsRef<Path>, format: InputFormat) -> Result<LoadedGraph> {
    let path = path.as_ref();
    match format {
        InputFormat::TsvEdges => load_tsv(path),
        InputFormat::DatasetDir => Ok(LoadedGraph {
            graph: read_dataset(path)?.graph,
            id_map: None,
        }),
    }
}

fn write_pairs(path: &Path, header: Option<usize>, pairs: &[(u32, u32)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(n) = header {
        writeln!(w, "#nodes {n}")?;
    }
    for (u, v) in pairs {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `#nodes N` followed by one `u<TAB>v` line per undirected edge.
pub fn save_edge_list(g: &SparseGraph, path: impl AsRef<Path>) -> Result<()> {
    let edges: Vec<(u32, u32)> = g.edges().collect();
    write_pairs(path.as_ref(), Some(g.num_nodes()), &edges)
}

pub fn write_features(path: impl AsRef<Path>, features: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(features.nrows() as u32).to_le_bytes())?;
    w.write_all(&(features.ncols() as u32).to_le_bytes())?;
    for &x in features.iter() {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::format(path, "missing feature header"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != rows * cols * 4 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", rows * cols * 4, body.len()),
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::format(path, e.to_string()))
}

fn read_pairs_file(path: &Path, num_nodes: usize) -> Result<Vec<(u32, u32)>> {
    dense_pairs(&parse_edges(path)?.pairs, num_nodes)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(File::open(
        dir.join("meta.json"),
    )?))?;
    let n = meta.num_nodes;
    let raw = parse_edges(&dir.join("edges.tsv"))?;
    if let Some(declared) = raw.declared {
        if declared != n {
            return Err(Error::format(
                dir.join("edges.tsv"),
                format!("header declares {declared} nodes, meta.json says {n}"),
            ));
        }
    }
    let mut graph = SparseGraph::from_edges(n, dense_pairs(&raw.pairs, n)?)?;

    let features_path = dir.join("features.bin");
    if features_path.exists() {
        graph = graph.with_features(read_features(&features_path)?)?;
    }
    let labels_path = dir.join("labels.tsv");
    if labels_path.exists() {
        let classes = meta
            .num_classes
            .ok_or_else(|| Error::format(dir.join("meta.json"), "labels present without num_classes"))?;
        let mut labels = vec![None; n];
        for (node, class) in read_pairs_file(&labels_path, n)? {
            if labels[node as usize].replace(class).is_some() {
                return Err(Error::DuplicateLabel(node));
            }
        }
        graph = graph.with_labels(labels, classes)?;
    }
    let test_edges_path = dir.join("test_edges.tsv");
    let test_edges = if test_edges_path.exists() {
        read_pairs_file(&test_edges_path, n)?
    } else {
        Vec::new()
    };
    let test_labels_path = dir.join("test_labels.tsv");
    let test_labels = if test_labels_path.exists() {
        read_pairs_file(&test_labels_path, n)?
    } else {
        Vec::new()
    };
    Ok(Dataset {
        meta,
        graph,
        test_edges,
        test_labels,
    })
}

pub fn write_dataset(dir: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_edge_list(&ds.graph, dir.join("edges.tsv"))?;
    if let Some(f) = ds.graph.features() {
        write_features(dir.join("features.bin"), f)?;
    }
    if let Some(labels) = ds.graph.labels() {
        let pairs: Vec<(u32, u32)> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|c| (i as u32, c)))
            .collect();
        write_pairs(&dir.join("labels.tsv"), None, &pairs)?;
    }
    if !ds.test_edges.is_empty() {
        write_pairs(&dir.join("test_edges.tsv"), None, &ds.test_edges)?;
    }
    if !ds.test_labels.is_empty() {
        write_pairs(&dir.join("test_labels.tsv"), None, &ds.test_labels)?;
    }
    let mut meta = File::create(dir.join("meta.json"))?;
    serde_json::to_writer_pretty(&mut meta, &ds.meta)?;
    meta.write_all(b"\n")?;
    Ok(())
}
