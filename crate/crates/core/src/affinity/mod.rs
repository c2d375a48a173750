//! Pixel/patch affinity graphs.
//!
//! Two sources of similarity are combined on a common grid:
//!
//! * semantic: the Gram matrix of unit-normalized feature vectors, with
//!   negative correlations clipped to zero;
//! * color: a sparse k-nearest-neighbor graph over per-pixel descriptors
//!   `(cos h, sin h, s, v, x, y)` with weight `1 - distance`.
//!
//! The fused graph is `W_feat + lambda * W_knn`.

mod kdtree;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tensor_io::{rgb_to_hsv, FeatureMap, ImageBuffer};

pub(crate) use kdtree::KdTree;

/// Gram entries below this are not stored.
pub const FEATURE_PRUNE_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_KNN_K: usize = 20;

/// Symmetric, nonnegative sparse weights over the cells of a `rows x cols`
/// grid (node `y * cols + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    matrix: SparseMatrix,
    rows: usize,
    cols: usize,
}

impl AffinityMatrix {
    pub fn new(matrix: SparseMatrix, rows: usize, cols: usize) -> Result<Self> {
        if matrix.n() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "affinity has {} nodes, grid {rows}x{cols} has {}",
                matrix.n(),
                rows * cols
            )));
        }
        if !matrix.is_symmetric() {
            return Err(Error::InvalidArgument("affinity matrix must be symmetric".into()));
        }
        if matrix.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("affinity weights must be nonnegative".into()));
        }
        Ok(Self { matrix, rows, cols })
    }

    /// Affinity over `n` nodes with no spatial layout (a `1 x n` grid).
    pub fn from_graph(matrix: SparseMatrix) -> Result<Self> {
        let n = matrix.n();
        Self::new(matrix, 1, n)
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.matrix.get(u, v)
    }
}

/// Six-dimensional color + position descriptor of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDescriptor(pub [f64; 6]);

impl PixelDescriptor {
    /// `x`, `y` are normalized by `(cols - 1)`, `(rows - 1)`; a single
    /// row or column maps to 0.
    pub fn new(rgb: [u8; 3], y: usize, x: usize, rows: usize, cols: usize) -> Self {
        let hsv = rgb_to_hsv(rgb);
        let norm = |v: usize, size: usize| if size > 1 { v as f64 / (size - 1) as f64 } else { 0.0 };
        Self([hsv.h.cos(), hsv.h.sin(), hsv.s, hsv.v, norm(x, cols), norm(y, rows)])
    }

    pub fn distance(&self, other: &Self) -> f64 {
        kdtree::sq_dist(&self.0, &other.0).sqrt()
    }
}

pub fn pixel_descriptors(img: &ImageBuffer) -> Vec<PixelDescriptor> {
    let (rows, cols) = (img.height(), img.width());
    let mut out = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        for x in 0..cols {
            out.push(PixelDescriptor::new(img.get(y, x), y, x, rows, cols));
        }
    }
    out
}

/// Scale every location's `C`-vector to unit L2 norm. Zero vectors stay zero.
pub fn normalize_features(fm: &FeatureMap) -> FeatureMap {
    let (c, n) = (fm.channels(), fm.locations());
    let data = fm.data();
    let mut out = data.to_vec();
    for i in 0..n {
        let norm = (0..c).map(|k| (data[k * n + i] as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for k in 0..c {
                out[k * n + i] = (data[k * n + i] as f64 / norm) as f32;
            }
        }
    }
    FeatureMap::new(c, fm.height(), fm.width(), fm.patch_size(), out).expect("normalization keeps values finite")
}

/// Clipped Gram matrix `max(0, <f_u, f_v>)` over the feature grid. Entries
/// below [`FEATURE_PRUNE_THRESHOLD`] are not stored.
pub fn feature_affinity(fm: &FeatureMap) -> AffinityMatrix {
    let vecs = fm.to_location_major();
    gram_affinity(&vecs, fm.channels(), fm.height(), fm.width())
}

pub(crate) fn gram_affinity(vecs: &[f64], c: usize, rows: usize, cols: usize) -> AffinityMatrix {
    let n = rows * cols;
    let at = |i: usize| &vecs[i * c..(i + 1) * c];
    // Upper triangle (j >= i) per row, computed in parallel then mirrored.
    let upper: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fi = at(i);
            (i..n)
                .filter_map(|j| {
                    let g = clipped_dot(fi, at(j));
                    (g >= FEATURE_PRUNE_THRESHOLD).then_some((j, g))
                })
                .collect()
        })
        .collect();
    let matrix = SparseMatrix::from_sorted_rows(mirror_upper(upper)).expect("mirrored rows are sorted");
    AffinityMatrix { matrix, rows, cols }
}

#[inline]
pub(crate) fn clipped_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().max(0.0)
}

/// Turn per-row upper-triangular lists (`j >= i`) into full symmetric rows.
pub(crate) fn mirror_upper(upper: Vec<Vec<(usize, f64)>>) -> Vec<Vec<(usize, f64)>> {
    let n = upper.len();
    let mut lower: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in upper.iter().enumerate() {
        for &(j, v) in row {
            if j > i {
                lower[j].push((i, v));
            }
        }
    }
    lower
        .into_iter()
        .zip(upper)
        .map(|(mut lo, up)| {
            lo.extend(up);
            lo
        })
        .collect()
}

/// Sparse KNN color affinity over the pixels of `img`.
///
/// Each pixel `v` links to its `k` nearest descriptors `u` (self excluded,
/// ties to the smaller index) with weight `max(0, 1 - |psi(u) - psi(v)|)`.
/// The directed graph is symmetrized as `(W + W^T) / 2`; zero weights are
/// not stored.
pub fn knn_color_affinity(img: &ImageBuffer, k: usize) -> Result<AffinityMatrix> {
    let n = img.height() * img.width();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("knn k = {k} must lie in 1..{n}")));
    }
    let points: Vec<[f64; 6]> = pixel_descriptors(img).into_iter().map(|d| d.0).collect();
    let tree = KdTree::build(&points);
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n).into_par_iter().map(|v| tree.nearest_excluding(v, k)).collect();

    let mut triplets = Vec::with_capacity(2 * n * k);
    for (v, list) in neighbors.iter().enumerate() {
        for &(u, d2) in list {
            let w = (1.0 - d2.sqrt()).max(0.0);
            if w > 0.0 {
                triplets.push((v, u, 0.5 * w));
                triplets.push((u, v, 0.5 * w));
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n, triplets)?;
    AffinityMatrix::new(matrix, img.height(), img.width())
}

/// `W_feat + lambda * W_knn` on a shared grid.
pub fn fuse_affinities(w_feat: &AffinityMatrix, w_knn: &AffinityMatrix, lambda_knn: f64) -> Result<AffinityMatrix> {
    if (w_feat.rows, w_feat.cols) != (w_knn.rows, w_knn.cols) {
        return Err(Error::DimensionMismatch(format!(
            "feature affinity on {}x{} vs color affinity on {}x{}",
            w_feat.rows, w_feat.cols, w_knn.rows, w_knn.cols
        )));
    }
    if !(lambda_knn >= 0.0 && lambda_knn.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_knn = {lambda_knn} must be finite and >= 0")));
    }
    if lambda_knn == 0.0 {
        return Ok(w_feat.clone());
    }
    let matrix = w_feat.matrix.add_scaled(&w_knn.matrix, lambda_knn)?.without_zeros();
    AffinityMatrix::new(matrix, w_feat.rows, w_feat.cols)
}
