use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{AttentionKind, LayerParams, ModelConfig, Real, TransformerModel, TENSOR_NAMES};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GFMCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Model configuration plus named `f32` tensors.
///
/// Layout (little-endian): magic, version, d, L', H, S (u32), K (f64), d_ff,
/// attention kind, tensor count (u32), then per tensor: name length, name,
/// rank, dims (u64), values (f32).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(config: ModelConfig) -> Self {
        Self {
            config,
            tensors: Vec::new(),
        }
    }

    pub fn from_model<T: Real>(m: &TransformerModel<T>) -> Self {
        let mut c = Self::new(m.config);
        for (name, shape, data) in m.named_tensors() {
            c.push(name, shape, data.iter().map(|v| v.to_f32().unwrap()).collect());
        }
        c
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_model<T: Real>(&self) -> Result<TransformerModel<T>> {
        let cfg = self.config;
        cfg.validate()?;
        let fetch = |l: usize, name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let key = format!("layers.{l}.{name}");
            let t = self
                .get(&key)
                .ok_or_else(|| Error::State(format!("checkpoint lacks tensor {key}")))?;
            if t.shape != shape {
                return Err(Error::shape(format!("tensor {key} has shape {:?}", t.shape)));
            }
            Ok(t.data.iter().map(|&v| T::lit(v as f64)).collect())
        };
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        let mat = |l, n, r, c| -> Result<Array2<T>> {
            Array2::from_shape_vec((r, c), fetch(l, n, &[r, c])?).map_err(|e| Error::shape(e.to_string()))
        };
        let vec = |l, n, r| -> Result<Array1<T>> { Ok(Array1::from_vec(fetch(l, n, &[r])?)) };
        debug_assert_eq!(TENSOR_NAMES.len(), 12);
        let layers = (0..cfg.layers)
            .map(|l| {
                Ok(LayerParams {
                    wq: mat(l, "wq", d, d)?,
                    wk: mat(l, "wk", d, d)?,
                    wv: mat(l, "wv", d, d)?,
                    wo: mat(l, "wo", d, d)?,
                    w1: mat(l, "w1", d, f)?,
                    b1: vec(l, "b1", f)?,
                    w2: mat(l, "w2", f, d)?,
                    b2: vec(l, "b2", d)?,
                    ln1_gamma: vec(l, "ln1_gamma", d)?,
                    ln1_beta: vec(l, "ln1_beta", d)?,
                    ln2_gamma: vec(l, "ln2_gamma", d)?,
                    ln2_beta: vec(l, "ln2_beta", d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformerModel { config: cfg, layers })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION, c.dim as u32, c.layers as u32, c.heads as u32, c.anchors as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&c.scale.to_le_bytes());
        let kind = match c.attention {
            AttentionKind::Anchor => 0u32,
            AttentionKind::Full => 1,
        };
        for v in [c.ffn_dim as u32, kind, self.tensors.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &s in &t.shape {
                out.extend_from_slice(&(s as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(Error::format(path, "not a checkpoint"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let heads = r.u32()? as usize;
        let anchors = r.u32()? as usize;
        let scale = r.f64()?;
        let ffn_dim = r.u32()? as usize;
        let attention = match r.u32()? {
            0 => AttentionKind::Anchor,
            1 => AttentionKind::Full,
            k => return Err(Error::format(path, format!("unknown attention kind {k}"))),
        };
        let config = ModelConfig {
            dim,
            layers,
            heads,
            anchors,
            scale,
            ffn_dim,
            attention,
        };
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = r
                .take(numel * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after last tensor"));
        }
        Ok(Self { config, tensors })
    }

    /// Writes through a temporary file so a failed write leaves the previous file intact.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(&self.to_bytes())?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = ModelConfig::new(8, 2, 2);
        cfg.anchors = 3;
        let m = TransformerModel::<f32>::new(cfg, &mut rng).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("model.ckpt");
        let mut c = Checkpoint::from_model(&m);
        c.push("extra", vec![2], vec![1.5, -0.0]);
        c.write(&p).unwrap();
        let back = Checkpoint::read(&p).unwrap();
        assert_eq!(back, c);
        let m2: TransformerModel<f32> = back.to_model().unwrap();
        for (a, b) in m.named_tensors().iter().zip(m2.named_tensors()) {
            assert!(a.2.iter().zip(b.2).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.get("extra").unwrap().data[1].to_bits(), (-0.0f32).to_bits());
        assert_eq!(fs::read(&p).unwrap(), back.to_bytes());
    }

    #[test]
    fn truncated_file_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TransformerModel::<f32>::new(ModelConfig::new(4, 1, 1), &mut rng).unwrap();
        let bytes = Checkpoint::from_model(&m).to_bytes();
        let p = Path::new("x.ckpt");
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3], p),
            Err(Error::FileFormat { .. })
        ));
        assert!(Checkpoint::from_bytes(b"nonsense", p).is_err());
    }
}
