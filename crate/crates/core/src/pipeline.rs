//! End-to-end orchestration for one image or a dataset.
//!
//! Images are cropped to a multiple of the feature patch size. The graph
//! lives on an intermediate grid of `floor(M / d) x floor(N / d)` cells for
//! divisor `d`: features are bilinearly resampled onto it, the image is
//! downsampled onto it, and each cell spans `d` pixels. Without an image the
//! feature grid itself is used and a cell spans one patch.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{feature_affinity, fuse_affinities, knn_color_affinity, normalize_features, DEFAULT_KNN_K};
use crate::error::{Error, Result};
use crate::localize::{localize, BinaryMask, BoundingBox, Localization};
use crate::matting::{build_fullres_affinity, soft_matte, Matte, MattingParams, DEFAULT_NODE_CAP, DEFAULT_SAMPLE_RATE};
use crate::segment::{coarse_object_mask, crf_refine, CrfParams, DEFAULT_UNARY_CONFIDENCE};
use crate::semseg::{
    cluster_dataset, paint_semantic, per_image_segments, segment_descriptors, DatasetClustering, DescriptorMode,
    SegmentMap, DEFAULT_DATASET_K, DEFAULT_N_EIGENVECTORS, DEFAULT_PER_IMAGE_K,
};
use crate::spectral::{
    build_normalized_laplacian, smallest_eigenpairs, EigenDecomposition, LanczosOptions, DEFAULT_SEED, DEFAULT_TOL,
};
use crate::tensor_io::{crop_to_patch_multiple, replicate_pad, FeatureMap, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda_knn: f64,
    pub knn_k: usize,
    pub intermediate_divisor: usize,
    pub n_eigenvectors: usize,
    pub per_image_k: usize,
    pub dataset_k: usize,
    pub crf: CrfParams,
    pub unary_confidence: f64,
    /// Seed for every clustering step.
    pub seed: u64,
    pub eigen_seed: u64,
    pub eigen_tol: f64,
    pub matte_sample_rate: f64,
    pub matte_node_cap: usize,
    /// Eigenvector used as the soft matte.
    pub matte_index: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda_knn: 10.0,
            knn_k: DEFAULT_KNN_K,
            intermediate_divisor: 8,
            n_eigenvectors: DEFAULT_N_EIGENVECTORS,
            per_image_k: DEFAULT_PER_IMAGE_K,
            dataset_k: DEFAULT_DATASET_K,
            crf: CrfParams::default(),
            unary_confidence: DEFAULT_UNARY_CONFIDENCE,
            seed: 0,
            eigen_seed: DEFAULT_SEED,
            eigen_tol: DEFAULT_TOL,
            matte_sample_rate: DEFAULT_SAMPLE_RATE,
            matte_node_cap: DEFAULT_NODE_CAP,
            matte_index: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("knn_k", self.knn_k),
            ("intermediate_divisor", self.intermediate_divisor),
            ("n_eigenvectors", self.n_eigenvectors),
            ("per_image_k", self.per_image_k),
            ("dataset_k", self.dataset_k),
            ("matte_index", self.matte_index),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if !(self.lambda_knn.is_finite() && self.lambda_knn >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda_knn = {} must be finite and >= 0", self.lambda_knn)));
        }
        if self.eigen_tol.is_nan() || self.eigen_tol <= 0.0 {
            return Err(Error::InvalidArgument("eigen_tol must be positive".into()));
        }
        self.crf.validate()
    }

    pub fn lanczos(&self) -> LanczosOptions {
        LanczosOptions { seed: self.eigen_seed, ..LanczosOptions::with_tol(self.eigen_tol) }
    }

    pub fn matting(&self) -> MattingParams {
        MattingParams {
            lambda_knn: self.lambda_knn,
            knn_k: self.knn_k,
            sample_rate: self.matte_sample_rate,
            seed: self.seed,
            node_cap: self.matte_node_cap,
        }
    }
}

/// Eigenvectors on the intermediate grid plus the geometry to map back.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eig: EigenDecomposition,
    /// Pixels per grid cell.
    pub cell: usize,
    /// The image after cropping to a patch multiple.
    pub image: Option<ImageBuffer>,
    /// Size of the uncropped input, in pixels.
    pub original: (usize, usize),
}

/// Fused affinity on the intermediate grid and its smallest
/// `min(n_eigenvectors + 1, n)` Laplacian eigenpairs.
pub fn spectrum(img: Option<&ImageBuffer>, fm: &FeatureMap, cfg: &PipelineConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let p = fm.patch_size();
    let (image, rows, cols, cell, original) = match img {
        Some(img) => {
            let cropped = crop_to_patch_multiple(img, p)?;
            if (cropped.height() / p, cropped.width() / p) != (fm.height(), fm.width()) {
                return Err(Error::DimensionMismatch(format!(
                    "{}x{} image with patch {p} does not match the {}x{} feature grid",
                    img.height(),
                    img.width(),
                    fm.height(),
                    fm.width()
                )));
            }
            let d = cfg.intermediate_divisor;
            let (rows, cols) = (cropped.height() / d, cropped.width() / d);
            if rows == 0 || cols == 0 {
                return Err(Error::SmallerThanPatch { rows: cropped.height(), cols: cropped.width(), patch: d });
            }
            (Some(cropped), rows, cols, d, (img.height(), img.width()))
        }
        None => {
            if cfg.lambda_knn > 0.0 {
                return Err(Error::InvalidArgument("the color affinity (lambda_knn > 0) needs the image".into()));
            }
            (None, fm.height(), fm.width(), p, (fm.height() * p, fm.width() * p))
        }
    };
    let feats = normalize_features(&normalize_features(fm).resized(rows, cols)?);
    let mut w = feature_affinity(&feats);
    if let (Some(image), true) = (&image, cfg.lambda_knn > 0.0) {
        let small = image.resized(rows, cols)?;
        let knn = knn_color_affinity(&small, cfg.knn_k.min(rows * cols - 1).max(1))?;
        w = fuse_affinities(&w, &knn, cfg.lambda_knn)?;
    }
    let l = build_normalized_laplacian(&w);
    let m = (cfg.n_eigenvectors + 1).min(rows * cols);
    let eig = smallest_eigenpairs(&l, m, &cfg.lanczos())?.with_grid(rows, cols)?;
    Ok(Spectrum { eig, cell, image, original })
}

/// Localization with its box clamped to the uncropped image.
pub fn localize_image(img: Option<&ImageBuffer>, fm: &FeatureMap, cfg: &PipelineConfig) -> Result<Localization> {
    let s = spectrum(img, fm, cfg)?;
    let mut loc = localize(&s.eig, s.cell)?;
    let b = loc.bbox;
    let (h, w) = (s.original.0 as u32, s.original.1 as u32);
    loc.bbox = BoundingBox::new(b.x1.min(w - 1), b.y1.min(h - 1), b.x2.min(w), b.y2.min(h))?;
    Ok(loc)
}

/// CRF-refined object mask at the input resolution; rows and columns lost
/// to cropping repeat the last refined row and column.
pub fn segment_image(img: &ImageBuffer, fm: &FeatureMap, cfg: &PipelineConfig) -> Result<BinaryMask> {
    let s = spectrum(Some(img), fm, cfg)?;
    let coarse = coarse_object_mask(&s.eig)?;
    let image = s.image.expect("spectrum keeps the cropped image");
    let refined = crf_refine(&image, &coarse, &cfg.crf, cfg.unary_confidence)?;
    let as_labels =
        SegmentMap::new(refined.rows(), refined.cols(), refined.bits().iter().map(|&b| b as u32).collect())?;
    let padded = replicate_pad(&as_labels, img.height(), img.width())?;
    BinaryMask::new(img.height(), img.width(), padded.labels().iter().map(|&l| l == 1).collect())
}

/// Soft matte from a full-resolution decomposition of the cropped image.
pub fn matte_image(img: &ImageBuffer, fm: &FeatureMap, cfg: &PipelineConfig) -> Result<(ImageBuffer, Matte)> {
    cfg.validate()?;
    let image = crop_to_patch_multiple(img, fm.patch_size())?;
    let w = build_fullres_affinity(&image, fm, &cfg.matting())?;
    let l = build_normalized_laplacian(&w);
    let m = (cfg.matte_index + 1).min(l.n());
    let eig = smallest_eigenpairs(&l, m, &cfg.lanczos())?.with_grid(image.height(), image.width())?;
    let matte = soft_matte(&eig, cfg.matte_index)?;
    Ok((image, matte))
}

/// One dataset entry.
#[derive(Debug, Clone)]
pub struct SemsegInput {
    pub image_id: String,
    pub image: Option<ImageBuffer>,
    pub features: FeatureMap,
}

#[derive(Debug, Clone)]
pub struct SemsegOutput {
    /// Per-image segments on the intermediate grid.
    pub segments: Vec<SegmentMap>,
    /// Semantic maps at input resolution, ids `0..=K`.
    pub semantic: Vec<(String, SegmentMap)>,
    pub clustering: DatasetClustering,
}

/// Per-image segmentation, descriptors, dataset clustering and painting.
/// Images are processed in parallel; results are independent of thread count.
pub fn semseg_dataset(inputs: &[SemsegInput], cfg: &PipelineConfig, mode: &DescriptorMode) -> Result<SemsegOutput> {
    let per_image: Vec<(Spectrum, SegmentMap)> = inputs
        .par_iter()
        .map(|inp| {
            let s = spectrum(inp.image.as_ref(), &inp.features, cfg)?;
            let seg = per_image_segments(&s.eig, cfg.n_eigenvectors, cfg.per_image_k, cfg.seed)?;
            Ok((s, seg))
        })
        .collect::<Result<_>>()?;
    let mut descs = Vec::new();
    for (inp, (_, seg)) in inputs.iter().zip(&per_image) {
        let fm = normalize_features(&inp.features).resized(seg.rows(), seg.cols())?;
        descs.extend(segment_descriptors(&inp.image_id, seg, &fm, mode)?);
    }
    let clustering = cluster_dataset(&descs, cfg.dataset_k, cfg.seed)?;

    let mut ids: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); inputs.len()];
    let index: BTreeMap<&str, usize> = inputs.iter().enumerate().map(|(i, inp)| (inp.image_id.as_str(), i)).collect();
    for (d, &id) in descs.iter().zip(&clustering.ids) {
        ids[index[d.image_id.as_str()]].insert(d.segment_label, id);
    }
    let mut semantic = Vec::with_capacity(inputs.len());
    for ((inp, (s, seg)), ids) in inputs.iter().zip(&per_image).zip(&ids) {
        let painted = upsample_cells(&paint_semantic(seg, ids), s.cell)?;
        semantic.push((inp.image_id.clone(), replicate_pad(&painted, s.original.0, s.original.1)?));
    }
    Ok(SemsegOutput { segments: per_image.into_iter().map(|(_, seg)| seg).collect(), semantic, clustering })
}

/// Repeat every cell as a `cell x cell` block.
pub fn upsample_cells(seg: &SegmentMap, cell: usize) -> Result<SegmentMap> {
    let (rows, cols) = (seg.rows() * cell, seg.cols() * cell);
    let labels = (0..rows * cols).map(|i| seg.get(i / cols / cell, i % cols / cell)).collect();
    SegmentMap::with_background(rows, cols, labels, seg.background())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert!(PipelineConfig { intermediate_divisor: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { lambda_knn: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn config_serde_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"knn_k": 7}"#).unwrap();
        assert_eq!(cfg, PipelineConfig { knn_k: 7, ..Default::default() });
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn upsampling_blocks() {
        let s = SegmentMap::new(1, 2, vec![3, 4]).unwrap();
        assert_eq!(upsample_cells(&s, 2).unwrap().labels(), &[3, 3, 4, 4, 3, 3, 4, 4]);
    }

    #[test]
    fn feature_only_spectrum_needs_no_image() {
        let fm = FeatureMap::new(1, 2, 2, 8, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        assert!(spectrum(None, &fm, &PipelineConfig::default()).is_err());
        let cfg = PipelineConfig { lambda_knn: 0.0, ..Default::default() };
        let s = spectrum(None, &fm, &cfg).unwrap();
        assert_eq!((s.cell, s.original, s.eig.len()), (8, (16, 16), 4));
    }
}
