use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::SparseGraph;
use crate::error::{Error, Result};

/// `D^{-1/2} A D^{-1/2}` over the CSR structure of the source graph.
///
/// Zero-degree nodes are empty rows.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &SparseGraph) -> Self {
        let deg = g.degree_vector();
        let mut values = Vec::with_capacity(g.nnz());
        for u in 0..g.num_nodes() {
            for &v in g.neighbors(u as u32) {
                values.push(1.0 / (deg[u] as f64 * deg[v as usize] as f64).sqrt());
            }
        }
        Self {
            num_nodes: g.num_nodes(),
            offsets: g.offsets().to_vec(),
            indices: g.indices().to_vec(),
            values,
        }
    }

    /// Builds an operator from explicit CSR parts. Used by tests that need
    /// operators outside the normalized-adjacency family (e.g. weighted diagonals).
    pub fn from_csr_parts(
        num_nodes: usize,
        offsets: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != num_nodes + 1
            || indices.len() != values.len()
            || offsets.last() != Some(&indices.len())
        {
            return Err(Error::shape("inconsistent CSR parts"));
        }
        Ok(Self {
            num_nodes,
            offsets,
            indices,
            values,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, u: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[u]..self.offsets[u + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn value(&self, u: u32, v: u32) -> Option<f64> {
        let (idx, vals) = self.row(u as usize);
        idx.binary_search(&v).ok().map(|k| vals[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sparse-dense product `Ā·X`.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.num_nodes {
            return Err(Error::shape(format!(
                "spmm: operand has {} rows, operator has {}",
                x.nrows(),
                self.num_nodes
            )));
        }
        let k = x.ncols();
        let mut out = Array2::<f64>::zeros((self.num_nodes, k));
        if k == 0 {
            return Ok(out);
        }
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        out.as_slice_mut()
            .expect("fresh array is contiguous")
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(u, row)| {
                let (idx, vals) = self.row(u);
                for (&v, &w) in idx.iter().zip(vals) {
                    let src = &xs[v as usize * k..(v as usize + 1) * k];
                    for (o, s) in row.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            });
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for u in 0..self.num_nodes {
            let (idx, vals) = self.row(u);
            for (&v, &w) in idx.iter().zip(vals) {
                a[[u, v as usize]] = w;
            }
        }
        a
    }
}
