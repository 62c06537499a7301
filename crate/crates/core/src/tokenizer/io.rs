use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{projector_for_graph, Projector, Provenance, TokenTable, TokenizerConfig};
use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, SparseGraph};

const TOKEN_MAGIC: &[u8; 8] = b"GFMTOK01";
const PROJECTOR_MAGIC: &[u8; 8] = b"GFMPRJ01";
const HEADER_LEN: usize = 8 + 8 + 8 + 4 + 8;

fn write_matrix(path: &Path, magic: &[u8; 8], m: &Array2<f64>, order: usize, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    w.write_all(&(order as u32).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for &v in m.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(path: &Path, magic: &[u8; 8]) -> Result<(Array2<f64>, usize, u64)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != magic {
        return Err(Error::format(path, "bad header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n = u64_at(8) as usize;
    let d = u64_at(16) as usize;
    let order = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
    let seed = u64_at(28);
    let body = &bytes[HEADER_LEN..];
    if body.len() != n * d * 4 {
        return Err(Error::format(path, "payload size does not match header"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let m = Array2::from_shape_vec((n, d), values).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((m, order, seed))
}

/// Writes `tokens.bin`: magic, n, d, L, seed, then little-endian `f32` rows.
pub fn write_tokens(path: impl AsRef<Path>, t: &TokenTable) -> Result<()> {
    write_matrix(
        path.as_ref(),
        TOKEN_MAGIC,
        &t.embeddings,
        t.provenance.order,
        t.provenance.seed,
    )
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<TokenTable> {
    let (embeddings, order, seed) = read_matrix(path.as_ref(), TOKEN_MAGIC)?;
    Ok(TokenTable {
        embeddings,
        provenance: Provenance {
            graph_hash: String::new(),
            seed,
            order,
        },
    })
}

/// On-disk projector cache keyed by (graph hash, d, L, seed).
///
/// Cached matrices are stored as `f32`, so a cache hit is the `f32`-rounded
/// projector.
#[derive(Debug, Clone)]
pub struct ProjectorCache {
    dir: PathBuf,
}

impl ProjectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, graph_hash: &str, cfg: &TokenizerConfig, seed: u64) -> PathBuf {
        self.dir.join(format!(
            "{}-d{}-L{}-s{}.prj",
            &graph_hash[..graph_hash.len().min(16)],
            cfg.dim,
            cfg.order,
            seed
        ))
    }

    pub fn get_or_build(
        &self,
        g: &SparseGraph,
        adj: &NormalizedAdjacency,
        cfg: &TokenizerConfig,
        seed: u64,
    ) -> Result<Projector> {
        let path = self.path_for(&g.structure_hash(), cfg, seed);
        if path.exists() {
            let (matrix, order, s) = read_matrix(&path, PROJECTOR_MAGIC)?;
            if matrix.nrows() == g.num_nodes() && matrix.ncols() == cfg.dim && s == seed {
                return Ok(Projector {
                    matrix,
                    order,
                    rank_per_factor: cfg.dim / 2,
                    seed,
                });
            }
            log::warn!("ignoring stale projector cache entry {}", path.display());
        }
        let p = projector_for_graph(adj, cfg, seed)?;
        write_matrix(&path, PROJECTOR_MAGIC, &p.matrix, p.order, seed)?;
        Ok(p)
    }
}
