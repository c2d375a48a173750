//! Full-resolution affinities with a randomly subsampled feature Gram
//! matrix, soft mattes from eigenvectors, and alpha compositing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{
    clipped_dot, fuse_affinities, knn_color_affinity, mirror_upper, normalize_features, AffinityMatrix, DEFAULT_KNN_K,
    FEATURE_PRUNE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::spectral::EigenDecomposition;
use crate::tensor_io::{FeatureMap, ImageBuffer};

/// One in 16^2 feature pairs.
pub const DEFAULT_SAMPLE_RATE: f64 = 1.0 / 256.0;
/// Largest pixel count accepted for a full-resolution graph.
pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MattingParams {
    pub lambda_knn: f64,
    pub knn_k: usize,
    pub sample_rate: f64,
    pub seed: u64,
    pub node_cap: usize,
}

impl Default for MattingParams {
    fn default() -> Self {
        Self {
            lambda_knn: 10.0,
            knn_k: DEFAULT_KNN_K,
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed: 0,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// `W_feat' + lambda * W_knn` on the full pixel grid, where `W_feat'` keeps
/// each unordered off-diagonal pair independently with probability
/// `sample_rate` (plus the whole diagonal). Features are normalized,
/// bilinearly upsampled to the image size and renormalized.
pub fn build_fullres_affinity(img: &ImageBuffer, fm: &FeatureMap, params: &MattingParams) -> Result<AffinityMatrix> {
    if !(params.sample_rate > 0.0 && params.sample_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample rate {} must lie in (0, 1]", params.sample_rate)));
    }
    let (rows, cols) = (img.height(), img.width());
    let n = rows * cols;
    if n > params.node_cap {
        return Err(Error::TooLarge { n, cap: params.node_cap });
    }
    let up = normalize_features(&normalize_features(fm).resized(rows, cols)?);
    let c = up.channels();
    let vecs = up.to_location_major();
    let at = |i: usize| &vecs[i * c..(i + 1) * c];

    let pairs = sample_pairs(n, params.sample_rate, params.seed);
    let upper: Vec<Vec<(usize, f64)>> = pairs
        .into_par_iter()
        .enumerate()
        .map(|(i, cols_j)| {
            std::iter::once(i)
                .chain(cols_j)
                .filter_map(|j| {
                    let g = clipped_dot(at(i), at(j));
                    (g >= FEATURE_PRUNE_THRESHOLD).then_some((j, g))
                })
                .collect()
        })
        .collect();
    let w_feat = AffinityMatrix::new(SparseMatrix::from_sorted_rows(mirror_upper(upper))?, rows, cols)?;
    if params.lambda_knn == 0.0 {
        return Ok(w_feat);
    }
    fuse_affinities(&w_feat, &knn_color_affinity(img, params.knn_k)?, params.lambda_knn)
}

/// For each row `i`, the sampled columns `j > i` in increasing order. Pairs
/// are enumerated row-major over the strict upper triangle and selected by
/// geometric skipping, so the stream depends only on `seed`.
fn sample_pairs(n: usize, rate: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    if rate >= 1.0 {
        for (i, row) in out.iter_mut().enumerate() {
            row.extend(i + 1..n);
        }
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_q = (1.0 - rate).ln();
    let mut skip = || {
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        (u.ln() / log_q).floor() as u64
    };
    let total = n as u64 * n.saturating_sub(1) as u64 / 2;
    let (mut row, mut row_start) = (0usize, 0u64);
    let mut pos = skip();
    while pos < total {
        while pos >= row_start + (n - 1 - row) as u64 {
            row_start += (n - 1 - row) as u64;
            row += 1;
        }
        out[row].push(row + 1 + (pos - row_start) as usize);
        pos += 1 + skip();
    }
    out
}

/// Alpha values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matte {
    rows: usize,
    cols: usize,
    alpha: Vec<f64>,
}

impl Matte {
    pub fn new(rows: usize, cols: usize, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} alpha values for {rows}x{cols}", alpha.len())));
        }
        if let Some(i) = alpha.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, alpha: alpha.into_iter().map(|a| a.clamp(0.0, 1.0)).collect() })
    }

    pub fn filled(rows: usize, cols: usize, alpha: f64) -> Self {
        Self { rows, cols, alpha: vec![alpha.clamp(0.0, 1.0); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// Eigenvector `i` rescaled affinely so its range becomes `[0, 1]`.
pub fn soft_matte(eig: &EigenDecomposition, i: usize) -> Result<Matte> {
    if i == 0 || i >= eig.len() {
        return Err(Error::InvalidArgument(format!("matte index {i} must lie in 1..{}", eig.len())));
    }
    let y = eig.vector(i);
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Err(Error::DegenerateSpectrum(format!("eigenvector {i} is constant")));
    }
    Matte::new(eig.rows(), eig.cols(), y.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// `alpha * fg + (1 - alpha) * bg` per channel, rounded.
pub fn composite(fg: &ImageBuffer, matte: &Matte, bg: &ImageBuffer) -> Result<ImageBuffer> {
    let dims = (fg.height(), fg.width());
    if dims != (bg.height(), bg.width()) || dims != (matte.rows, matte.cols) {
        return Err(Error::DimensionMismatch(format!(
            "foreground {}x{}, matte {}x{}, background {}x{}",
            fg.height(),
            fg.width(),
            matte.rows,
            matte.cols,
            bg.height(),
            bg.width()
        )));
    }
    let pixels = fg
        .pixels()
        .iter()
        .zip(bg.pixels())
        .zip(&matte.alpha)
        .map(|((f, b), &a)| std::array::from_fn(|c| (a * f[c] as f64 + (1.0 - a) * b[c] as f64).round() as u8))
        .collect();
    ImageBuffer::new(fg.height(), fg.width(), pixels)
}
