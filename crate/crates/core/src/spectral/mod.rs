//! Graph Laplacians and their smallest eigenpairs.
//!
//! Eigenvectors come back unit-norm, sign-normalized (largest-magnitude
//! entry positive) and in ascending eigenvalue order. When eigenvalues are
//! repeated or nearly so, any orthonormal basis of that subspace may be
//! returned; callers must not rely on a particular one.

mod dense;
mod lanczos;
mod laplacian;
mod symeig;

pub use dense::{dense_eigen_oracle, DENSE_ORACLE_CAP};
pub use lanczos::{smallest_eigenpairs, LanczosOptions, DEFAULT_SEED, DEFAULT_TOL};
pub use laplacian::{build_laplacian, build_normalized_laplacian, cut_value, quadratic_form, DEGREE_REGULARIZATION};

pub use crate::sparse::SparseMatrix;

use crate::error::{Error, Result};
use crate::tensor_io::FeatureMap;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    rows: usize,
    cols: usize,
    /// Seed of the starting vector, for iterative solves.
    pub seed: Option<u64>,
    /// `||L y - lambda y||` per pair, when the solver reports them.
    pub residuals: Vec<f64>,
}

impl EigenDecomposition {
    pub fn new(values: Vec<f64>, vectors: Vec<Vec<f64>>, rows: usize, cols: usize) -> Result<Self> {
        if values.len() != vectors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues, {} eigenvectors",
                values.len(),
                vectors.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != rows * cols) {
            return Err(Error::DimensionMismatch(format!(
                "eigenvector of length {} for a {rows}x{cols} grid",
                v.len()
            )));
        }
        Ok(Self { values, vectors, rows, cols, seed: None, residuals: Vec::new() })
    }

    /// Reinterpret the node order as a `rows x cols` grid.
    pub fn with_grid(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.n() {
            return Err(Error::DimensionMismatch(format!("{} nodes cannot form a {rows}x{cols} grid", self.n())));
        }
        self.rows = rows;
        self.cols = cols;
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Keep only the first `m` pairs.
    pub fn truncated(mut self, m: usize) -> Self {
        self.values.truncate(m);
        self.vectors.truncate(m);
        self.residuals.truncate(m);
        self
    }

    /// Replace eigenvector `i` by its negation (testing sign conventions).
    pub fn negate(&mut self, i: usize) {
        self.vectors[i].iter_mut().for_each(|v| *v = -*v);
    }

    /// Eigenvectors as an `m x rows x cols` tensor for debug dumps.
    pub fn to_feature_map(&self) -> Result<FeatureMap> {
        let data = self.vectors.iter().flat_map(|v| v.iter().map(|&x| x as f32)).collect();
        FeatureMap::new(self.len(), self.rows, self.cols, 1, data)
    }
}

/// Flip `v` so its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = (0, 0.0f64);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    if v.get(best.0).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityMatrix;
    use rand::{Rng, SeedableRng};

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> AffinityMatrix {
        let t = edges.iter().flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)]);
        AffinityMatrix::from_graph(SparseMatrix::from_triplets(n, t).unwrap()).unwrap()
    }

    #[test]
    fn single_edge_laplacian() {
        let l = build_normalized_laplacian(&graph(2, &[(0, 1, 1.0)]));
        let d = l.to_dense();
        let want = [1.0, -1.0, -1.0, 1.0];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-11);
        }
        let eig = dense_eigen_oracle(&l).unwrap();
        assert!(eig.values()[0].abs() < 1e-10 && (eig.values()[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn path_graph_spectrum() {
        let l = build_normalized_laplacian(&graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]));
        let dense = dense_eigen_oracle(&l).unwrap();
        let lan = smallest_eigenpairs(&l, 3, &LanczosOptions::default()).unwrap();
        for (i, want) in [0.0, 1.0, 2.0].iter().enumerate() {
            assert!((dense.values()[i] - want).abs() < 1e-10);
            assert!((lan.values()[i] - want).abs() < 1e-8);
            assert!((lan.values()[i] - dense.values()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn two_components_double_zero() {
        let l = build_normalized_laplacian(&graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]));
        let lan = smallest_eigenpairs(&l, 2, &LanczosOptions::default()).unwrap();
        assert!(lan.values()[0].abs() < 1e-8 && lan.values()[1].abs() < 1e-8);
        let dense = dense_eigen_oracle(&l).unwrap();
        assert!(dense.values()[1].abs() < 1e-10 && (dense.values()[2] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_spectrum() {
        let z = SparseMatrix::zeros(5);
        let lan = smallest_eigenpairs(&z, 3, &LanczosOptions::default()).unwrap();
        assert!(lan.values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(dense_eigen_oracle(&SparseMatrix::zeros(1)).unwrap().values(), &[0.0]);
    }

    #[test]
    fn edgeless_graph_has_zero_laplacian() {
        let w =
            AffinityMatrix::from_graph(SparseMatrix::from_triplets(3, [(0, 0, 1.0), (1, 1, 2.0)]).unwrap()).unwrap();
        let l = build_normalized_laplacian(&w);
        assert!(l.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn oracle_trace_identity_and_cap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut t = Vec::new();
        for i in 0..10 {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                if i != j {
                    t.push((j, i, v));
                }
            }
        }
        let a = SparseMatrix::from_triplets(10, t).unwrap();
        let eig = dense_eigen_oracle(&a).unwrap();
        let trace: f64 = a.diagonal().iter().sum();
        assert!((trace - eig.values().iter().sum::<f64>()).abs() < 1e-9);
        assert!(matches!(dense_eigen_oracle(&SparseMatrix::zeros(DENSE_ORACLE_CAP + 1)), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn eigenpair_count_validated() {
        let l = SparseMatrix::identity(3);
        assert!(smallest_eigenpairs(&l, 0, &LanczosOptions::default()).is_err());
        assert!(smallest_eigenpairs(&l, 4, &LanczosOptions::default()).is_err());
        let asym = SparseMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        assert!(smallest_eigenpairs(&asym, 1, &LanczosOptions::default()).is_err());
    }

    #[test]
    fn quadratic_form_cases() {
        let w = graph(2, &[(0, 1, 2.5)]);
        let l = build_laplacian(&w);
        assert_eq!(quadratic_form(&l, &[0.0, 1.0]).unwrap(), 2.5);
        assert_eq!(quadratic_form(&l, &[3.0, 3.0]).unwrap(), 0.0);
        assert!(quadratic_form(&l, &[1.0]).is_err());
    }

    #[test]
    fn quadratic_form_matches_edge_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.2) {
                    edges.push((i, j, rng.gen_range(0.0..2.0)));
                }
            }
        }
        let w = graph(n, &edges);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let explicit: f64 = edges.iter().map(|&(u, v, wt)| wt * (x[u] - x[v]).powi(2)).sum();
        assert!((quadratic_form(&build_laplacian(&w), &x).unwrap() - explicit).abs() < 1e-10);
        assert!(quadratic_form(&build_normalized_laplacian(&w), &x).unwrap() >= -1e-12);
    }

    #[test]
    fn cut_cases() {
        let w = graph(3, &[(0, 1, 3.0), (1, 2, 1.0)]);
        assert_eq!(cut_value(&w, &[true, true, true]).unwrap(), 0.0);
        assert_eq!(cut_value(&w, &[true, false, false]).unwrap(), 3.0);
        assert_eq!(cut_value(&w, &[true, false, true]).unwrap(), 4.0);
        assert!(cut_value(&w, &[true]).is_err());
    }

    #[test]
    fn planted_split_beats_every_other_partition() {
        // Two 5-cliques joined by one weak edge; brute force over all 2^10
        // partitions (excluding trivial ones).
        let mut edges = Vec::new();
        for b in [0, 5] {
            for i in b..b + 5 {
                for j in i + 1..b + 5 {
                    edges.push((i, j, 1.0));
                }
            }
        }
        edges.push((4, 5, 0.05));
        let w = graph(10, &edges);
        let planted: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let planted_cut = cut_value(&w, &planted).unwrap();
        for mask in 1u32..(1 << 10) - 1 {
            let part: Vec<bool> = (0..10).map(|i| mask >> i & 1 == 1).collect();
            if part == planted || part.iter().zip(&planted).all(|(a, b)| a != b) {
                continue;
            }
            assert!(planted_cut < cut_value(&w, &part).unwrap());
        }
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 60;
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push((i, (i + 1) % n, 1.0));
            edges.push((i, rng.gen_range(0..n), rng.gen_range(0.1..1.0)));
        }
        let edges: Vec<_> = edges.into_iter().filter(|e| e.0 != e.1).collect();
        let l = build_normalized_laplacian(&graph(n, &edges));
        let a = smallest_eigenpairs(&l, 4, &LanczosOptions::default()).unwrap();
        let b = smallest_eigenpairs(&l, 4, &LanczosOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, Some(DEFAULT_SEED));
    }
}
