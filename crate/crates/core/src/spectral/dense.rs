use nalgebra::{DMatrix, SymmetricEigen};

use super::{fix_sign, EigenDecomposition};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const DENSE_ORACLE_CAP: usize = 2048;

/// Full spectrum of a symmetric matrix by a direct dense solver. Meant for
/// tests and small instances; refuses `n > 2048`.
pub fn dense_eigen_oracle(a: &SparseMatrix) -> Result<EigenDecomposition> {
    let n = a.n();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::TooLarge { n, cap: DENSE_ORACLE_CAP });
    }
    if !a.is_symmetric() {
        return Err(Error::InvalidArgument("dense oracle needs a symmetric matrix".into()));
    }
    let dense = DMatrix::from_row_slice(n, n, &a.to_dense());
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    EigenDecomposition::new(values, vectors, 1, n)
}
