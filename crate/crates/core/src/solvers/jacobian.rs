//! Jacobians of linear right-hand sides by probing with unit vectors.

use ndarray::Array2;

use super::krylov::CsrMatrix;
use crate::error::{Error, Result};

/// Dense `J` with column `k = f(e_k)`. Exact for linear `f`.
pub fn assemble_jacobian<F>(mut f: F, dim: usize) -> Result<Array2<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut j = Array2::zeros((dim, dim));
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for k in 0..dim {
        e[k] = 1.0;
        f(&e, &mut col)?;
        e[k] = 0.0;
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver(format!("non-finite Jacobian column {k}")));
        }
        j.column_mut(k).assign(&ndarray::ArrayView1::from(&col));
    }
    Ok(j)
}

/// Sparse `J` by the same probing, keeping only nonzero entries.
pub fn assemble_sparse<F>(mut f: F, dim: usize) -> Result<CsrMatrix>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut triplets = Vec::new();
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for k in 0..dim {
        e[k] = 1.0;
        f(&e, &mut col)?;
        e[k] = 0.0;
        for (i, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Solver(format!("non-finite Jacobian column {k}")));
            }
            if v != 0.0 {
                triplets.push((i, k, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dim, dim, &triplets))
}
