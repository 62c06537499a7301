//! Small dense factorizations backed by nalgebra.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn check_finite(a: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

/// Thin orthonormal basis for the column space of a tall matrix.
pub fn orthonormalize(y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_finite(y, "range sketch")?;
    let qr = to_nalgebra(y).qr();
    Ok(from_nalgebra(&qr.q()))
}

/// Dense SVD with singular values sorted in descending order.
///
/// Returns `(U, s, V)` with `A = U diag(s) Vᵀ`, thin shapes.
pub fn svd(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    check_finite(a, "svd input")?;
    let svd = to_nalgebra(a).svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd produced no U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Numeric("svd produced no V".into()))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let uo = Array2::from_shape_fn((u.nrows(), order.len()), |(i, k)| u[(i, order[k])]);
    let vo = Array2::from_shape_fn((vt.ncols(), order.len()), |(i, k)| vt[(order[k], i)]);
    let so = Array1::from_iter(order.iter().map(|&k| s[k]));
    Ok((uo, so, vo))
}
