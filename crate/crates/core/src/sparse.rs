//! Compressed sparse row storage for square real matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows at or above this size are multiplied in parallel. Each row's dot
/// product is still accumulated sequentially, so results are bitwise
/// identical to the serial path.
const PAR_MATVEC_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Build from `(row, col, value)` triplets. Duplicates are summed and
    /// column indices sorted within each row. Explicit zeros are kept.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, v) in &entries {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(i * n + j));
            }
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self { n, row_ptr, col_idx, values, symmetric: false };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Build from per-row `(col, value)` lists that are already sorted by
    /// column with no duplicates.
    pub fn from_sorted_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (k, &(j, v)) in row.iter().enumerate() {
                if j >= n || (k > 0 && row[k - 1].0 >= j) {
                    return Err(Error::InvalidArgument(format!("row {i} is not strictly sorted within 0..{n}")));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(i * n + j));
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        let mut m = Self { n, row_ptr, col_idx, values, symmetric: false };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new(), symmetric: true }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0))).expect("identity is valid")
    }

    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch(format!("{} dense values for {n}x{n}", dense.len())));
        }
        Self::from_triplets(n, dense.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (k / n, k % n, v)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// Iterate stored `(row, col, value)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let row_dot = |i: usize| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum::<f64>()
        };
        if self.n >= PAR_MATVEC_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, out)| *out = row_dot(i));
        } else {
            for (i, out) in y.iter_mut().enumerate() {
                *out = row_dot(i);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("cannot add {}x{0} and {}x{1}", self.n, other.n)));
        }
        Self::from_triplets(self.n, self.iter().chain(other.iter().map(|(i, j, v)| (i, j, alpha * v))))
    }

    /// Drop stored entries equal to zero.
    pub fn without_zeros(&self) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).filter(|(_, &x)| x != 0.0).map(|(&j, &x)| (j, x)).collect()
            })
            .collect();
        Self::from_sorted_rows(rows).expect("subset of a valid matrix")
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `P A P^T` where `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch(format!("permutation of length {} for n = {}", perm.len(), self.n)));
        }
        Self::from_triplets(self.n, self.iter().map(|(i, j, v)| (perm[i], perm[j], v)))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for (i, j, v) in self.iter() {
            d[i * self.n + j] = v;
        }
        d
    }

    /// Upper bound on every eigenvalue from Gershgorin discs.
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| if j == i { a } else { a.abs() }).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_symmetric(&self) -> bool {
        self.iter().all(|(i, j, v)| {
            let (c, vals) = self.row(j);
            matches!(c.binary_search(&i), Ok(k) if vals[k] == v)
        })
    }
}
