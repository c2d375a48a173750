use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Added to every degree before taking `D^{-1/2}`.
pub const DEGREE_REGULARIZATION: f64 = 1e-12;

/// `L = D^{-1/2} (D - W) D^{-1/2}` with `D` the row sums of `W`. Degrees are
/// regularized by [`DEGREE_REGULARIZATION`], so isolated nodes give zero rows.
pub fn build_normalized_laplacian(w: &AffinityMatrix) -> SparseMatrix {
    let wm = w.matrix();
    let degree = wm.row_sums();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / (d + DEGREE_REGULARIZATION).sqrt()).collect();
    let rows = (0..wm.n())
        .map(|i| {
            let (cols, vals) = wm.row(i);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(cols.len() + 1);
            let mut diag_done = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i && !diag_done {
                    row.push((i, degree[i] * inv_sqrt[i] * inv_sqrt[i]));
                    diag_done = true;
                }
                if j == i {
                    row.push((i, (degree[i] - v) * inv_sqrt[i] * inv_sqrt[i]));
                    diag_done = true;
                } else {
                    // Grouped so (i, j) and (j, i) round identically.
                    row.push((j, -v * (inv_sqrt[i] * inv_sqrt[j])));
                }
            }
            if !diag_done {
                row.push((i, degree[i] * inv_sqrt[i] * inv_sqrt[i]));
            }
            row
        })
        .collect();
    SparseMatrix::from_sorted_rows(rows).expect("laplacian rows follow the affinity pattern")
}

/// Unnormalized `L = D - W`.
pub fn build_laplacian(w: &AffinityMatrix) -> SparseMatrix {
    let wm = w.matrix();
    let degree = wm.row_sums();
    SparseMatrix::from_triplets(
        wm.n(),
        wm.iter().map(|(i, j, v)| (i, j, -v)).chain(degree.iter().enumerate().map(|(i, &d)| (i, i, d))),
    )
    .expect("laplacian of a valid affinity")
}

/// `x^T L x`.
pub fn quadratic_form(l: &SparseMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != l.n() {
        return Err(Error::DimensionMismatch(format!("vector of length {} for n = {}", x.len(), l.n())));
    }
    Ok(l.iter().map(|(i, j, v)| x[i] * v * x[j]).sum())
}

/// Total weight of edges with one endpoint in each part.
pub fn cut_value(w: &AffinityMatrix, partition: &[bool]) -> Result<f64> {
    if partition.len() != w.n() {
        return Err(Error::DimensionMismatch(format!("partition of length {} for n = {}", partition.len(), w.n())));
    }
    Ok(w.matrix().iter().filter(|&(i, j, _)| partition[i] && !partition[j]).map(|(_, _, v)| v).sum())
}
