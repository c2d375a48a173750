//! Dataset-level unsupervised semantic segmentation.
//!
//! Each image is split into segments by k-means over its eigenvector
//! embedding; the largest segment is background. The remaining segments are
//! described by a feature vector, clustered across the dataset, and painted
//! with their cluster id (`1..=K`, background `0`).

mod hungarian;
mod kmeans;

pub use hungarian::{hungarian, Matching};
pub use kmeans::{kmeans, kmeans_with, ClusterModel, KMeansOptions, DEFAULT_N_INIT, KMEANS_MAX_ITER};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affinity::normalize_features;
use crate::error::{Error, Result};
use crate::localize::BoundingBox;
use crate::segment::IGNORE_LABEL;
use crate::spectral::EigenDecomposition;
use crate::tensor_io::{png, read_feature_map_file, write_feature_map_file, FeatureMap};

pub const DEFAULT_N_EIGENVECTORS: usize = 15;
pub const DEFAULT_PER_IMAGE_K: usize = 15;
pub const DEFAULT_DATASET_K: usize = 20;
/// Patches added on every side of a segment's box before cropping.
pub const CROP_EXPANSION: usize = 2;

/// Integer label per grid cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
    background: Option<u32>,
}

impl SegmentMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        Self::with_background(rows, cols, labels, None)
    }

    pub fn with_background(rows: usize, cols: usize, labels: Vec<u32>, background: Option<u32>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} labels for a {rows}x{cols} grid", labels.len())));
        }
        Ok(Self { rows, cols, labels, background })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn background(&self) -> Option<u32> {
        self.background
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.cols + x]
    }

    /// Cell count per label.
    pub fn histogram(&self) -> BTreeMap<u32, u64> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }
}

/// Cluster grid cells on eigenvectors `1..=n_eig` (the first eigenvector
/// only encodes degree) and mark the largest cluster as background. Labels
/// are renumbered by first occurrence in row-major order.
pub fn per_image_segments(eig: &EigenDecomposition, n_eig: usize, k: usize, seed: u64) -> Result<SegmentMap> {
    if eig.len() < 2 || n_eig == 0 {
        return Err(Error::DegenerateSpectrum(format!(
            "{} eigenvectors leave no nonconstant embedding dimension",
            eig.len()
        )));
    }
    let dims = n_eig.min(eig.len() - 1);
    let n = eig.n();
    if k > n {
        return Err(Error::TooFewPoints { needed: k, available: n });
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| (1..=dims).map(|j| eig.vector(j)[i]).collect()).collect();
    let model = kmeans(&points, k, seed)?;

    let mut remap = vec![u32::MAX; k];
    let mut next = 0;
    let labels: Vec<u32> = model
        .assignments
        .iter()
        .map(|&a| {
            if remap[a] == u32::MAX {
                remap[a] = next;
                next += 1;
            }
            remap[a]
        })
        .collect();
    let seg = SegmentMap::new(eig.rows(), eig.cols(), labels)?;
    let background = seg.histogram().into_iter().fold((0, 0), |best, (l, c)| if c > best.1 { (l, c) } else { best }).0;
    Ok(SegmentMap { background: Some(background), ..seg })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub image_id: String,
    pub segment_label: u32,
    pub vector: Vec<f64>,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DescriptorMode {
    /// Mean of L2-normalized feature vectors over the segment's cells.
    MeanPool,
    /// Precomputed crop descriptors in `<dir>/<image_id>.segments.{dsft,json}`.
    External(PathBuf),
}

/// Descriptors of every non-background segment, ordered by label.
pub fn segment_descriptors(
    image_id: &str,
    segmap: &SegmentMap,
    fm: &FeatureMap,
    mode: &DescriptorMode,
) -> Result<Vec<SegmentDescriptor>> {
    match mode {
        DescriptorMode::MeanPool => mean_pool_descriptors(image_id, segmap, fm),
        DescriptorMode::External(dir) => read_descriptor_sidecar(dir, image_id, segmap),
    }
}

pub fn mean_pool_descriptors(image_id: &str, segmap: &SegmentMap, fm: &FeatureMap) -> Result<Vec<SegmentDescriptor>> {
    if (fm.height(), fm.width()) != (segmap.rows, segmap.cols) {
        return Err(Error::DimensionMismatch(format!(
            "features {}x{} vs segments {}x{}",
            fm.height(),
            fm.width(),
            segmap.rows,
            segmap.cols
        )));
    }
    let feats = normalize_features(fm).to_location_major();
    let c = fm.channels();
    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &l) in segmap.labels.iter().enumerate() {
        if Some(l) == segmap.background {
            continue;
        }
        let entry = sums.entry(l).or_insert_with(|| (vec![0.0; c], 0));
        entry.0.iter_mut().zip(&feats[i * c..(i + 1) * c]).for_each(|(s, v)| *s += v);
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(label, (sum, count))| SegmentDescriptor {
            image_id: image_id.to_string(),
            segment_label: label,
            vector: sum.into_iter().map(|v| v / count as f64).collect(),
            pixel_count: count,
        })
        .collect())
}

/// JSON index accompanying a descriptor DSFT. The tensor has one channel per
/// segment and `dim` rows of width 1, i.e. a row-major `segments x dim`
/// payload; `segments[s]` describes channel `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorIndex {
    pub image_id: String,
    pub dim: usize,
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub label: u32,
    /// Crop in pixels, `[x1, y1, x2, y2)`.
    pub crop: BoundingBox,
}

pub fn descriptor_sidecar_paths(dir: &Path, image_id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{image_id}.segments.dsft")), dir.join(format!("{image_id}.segments.json")))
}

pub fn write_descriptor_sidecar(dir: &Path, index: &DescriptorIndex, vectors: &[Vec<f64>]) -> Result<()> {
    if vectors.len() != index.segments.len() || vectors.iter().any(|v| v.len() != index.dim) || vectors.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} descriptors for {} indexed segments of dimension {}",
            vectors.len(),
            index.segments.len(),
            index.dim
        )));
    }
    let (dsft, json) = descriptor_sidecar_paths(dir, &index.image_id);
    let data = vectors.iter().flatten().map(|&v| v as f32).collect();
    write_feature_map_file(&FeatureMap::new(vectors.len(), index.dim, 1, 1, data)?, dsft)?;
    fs::write(json, serde_json::to_vec_pretty(index)?)?;
    Ok(())
}

pub fn read_descriptor_sidecar(dir: &Path, image_id: &str, segmap: &SegmentMap) -> Result<Vec<SegmentDescriptor>> {
    let (dsft, json) = descriptor_sidecar_paths(dir, image_id);
    if !dsft.exists() || !json.exists() {
        return Err(Error::MissingSidecar(dsft.display().to_string()));
    }
    let index: DescriptorIndex = serde_json::from_slice(&fs::read(json)?)?;
    let fm = read_feature_map_file(&dsft)?;
    if fm.channels() != index.segments.len() || fm.height() != index.dim || fm.width() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "descriptor tensor {}x{}x{} vs index of {} segments of dimension {}",
            fm.channels(),
            fm.height(),
            fm.width(),
            index.segments.len(),
            index.dim
        )));
    }
    let counts = segmap.histogram();
    let mut out = Vec::new();
    for (s, entry) in index.segments.iter().enumerate() {
        if Some(entry.label) == segmap.background {
            continue;
        }
        let &count = counts.get(&entry.label).ok_or_else(|| {
            Error::DimensionMismatch(format!("sidecar segment {} absent from the segment map", entry.label))
        })?;
        let vector = fm.data()[s * index.dim..(s + 1) * index.dim].iter().map(|&v| v as f64).collect();
        out.push(SegmentDescriptor {
            image_id: image_id.to_string(),
            segment_label: entry.label,
            vector,
            pixel_count: count as usize,
        });
    }
    out.sort_by_key(|d| d.segment_label);
    Ok(out)
}

/// Bounding box of every non-background segment, expanded by `expand`
/// cells per side, clamped to the grid and scaled to pixels.
pub fn segment_crop_boxes(segmap: &SegmentMap, patch: usize, expand: usize) -> Vec<SegmentEntry> {
    let mut extent: BTreeMap<u32, [usize; 4]> = BTreeMap::new();
    for y in 0..segmap.rows {
        for x in 0..segmap.cols {
            let l = segmap.get(y, x);
            if Some(l) == segmap.background {
                continue;
            }
            let e = extent.entry(l).or_insert([x, y, x, y]);
            *e = [e[0].min(x), e[1].min(y), e[2].max(x), e[3].max(y)];
        }
    }
    extent
        .into_iter()
        .map(|(label, [x1, y1, x2, y2])| {
            let px = |v: usize| (v * patch) as u32;
            let crop = BoundingBox::new(
                px(x1.saturating_sub(expand)),
                px(y1.saturating_sub(expand)),
                px((x2 + 1 + expand).min(segmap.cols)),
                px((y2 + 1 + expand).min(segmap.rows)),
            )
            .expect("segment boxes cover at least one cell");
            SegmentEntry { label, crop }
        })
        .collect()
}

/// Dataset clustering result: `ids[i]` in `1..=K` for `descs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetClustering {
    pub model: ClusterModel,
    pub ids: Vec<u32>,
}

pub fn cluster_dataset(descs: &[SegmentDescriptor], k: usize, seed: u64) -> Result<DatasetClustering> {
    let points: Vec<Vec<f64>> = descs.iter().map(|d| d.vector.clone()).collect();
    let model = kmeans(&points, k, seed)?;
    let ids = model.assignments.iter().map(|&a| a as u32 + 1).collect();
    Ok(DatasetClustering { model, ids })
}

/// Repaint a per-image segment map with semantic ids. Background becomes 0;
/// segments without an id also fall back to 0. Adjacent segments sharing an
/// id thereby merge.
pub fn paint_semantic(segmap: &SegmentMap, ids: &BTreeMap<u32, u32>) -> SegmentMap {
    let labels = segmap
        .labels
        .iter()
        .map(|l| if Some(*l) == segmap.background { 0 } else { ids.get(l).copied().unwrap_or(0) })
        .collect();
    SegmentMap { rows: segmap.rows, cols: segmap.cols, labels, background: Some(0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemsegEvaluation {
    pub miou: f64,
    /// IoU per ground-truth class; `None` for classes absent from the gt.
    pub per_class_iou: Vec<Option<f64>>,
    /// Ground-truth class assigned to each predicted id.
    pub mapping: Vec<u32>,
}

/// Matched mIoU over a dataset. Predicted id 0 and gt class 0 are both
/// background and always matched. The other ids are matched one-to-one by
/// Hungarian matching on IoU; ids left over when there are more clusters
/// than classes join the class they overlap most.
pub fn evaluate_semseg(preds: &[SegmentMap], gts: &[SegmentMap], num_classes: usize) -> Result<SemsegEvaluation> {
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} ground truths", preds.len(), gts.len())));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("at least one class is required".into()));
    }
    let num_pred = preds.iter().flat_map(|p| p.labels.iter()).max().map_or(1, |&m| m as usize + 1);
    let mut conf = vec![vec![0u64; num_classes]; num_pred];
    for (p, g) in preds.iter().zip(gts) {
        if (p.rows, p.cols) != (g.rows, g.cols) {
            return Err(Error::DimensionMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                p.rows, p.cols, g.rows, g.cols
            )));
        }
        for (&pl, &gl) in p.labels.iter().zip(&g.labels) {
            if gl == IGNORE_LABEL {
                continue;
            }
            if gl as usize >= num_classes {
                return Err(Error::InvalidArgument(format!("gt label {gl} out of range for {num_classes} classes")));
            }
            conf[pl as usize][gl as usize] += 1;
        }
    }
    let pred_tot: Vec<u64> = conf.iter().map(|r| r.iter().sum()).collect();
    let gt_tot: Vec<u64> = (0..num_classes).map(|g| conf.iter().map(|r| r[g]).sum()).collect();
    let pair_iou = |p: usize, g: usize| {
        let union = pred_tot[p] + gt_tot[g] - conf[p][g];
        if union == 0 {
            0.0
        } else {
            conf[p][g] as f64 / union as f64
        }
    };

    let mut mapping: Vec<Option<u32>> = vec![None; num_pred];
    mapping[0] = Some(0);
    let (clusters, classes) = (num_pred - 1, num_classes - 1);
    let size = clusters.max(classes);
    if size > 0 {
        let cost: Vec<Vec<f64>> = (0..size)
            .map(|p| {
                (0..size).map(|g| if p < clusters && g < classes { -pair_iou(p + 1, g + 1) } else { 0.0 }).collect()
            })
            .collect();
        for (p, g) in hungarian(&cost)?.pairs() {
            if p < clusters && g < classes {
                mapping[p + 1] = Some(g as u32 + 1);
            }
        }
    }
    for (p, m) in mapping.iter_mut().enumerate() {
        if m.is_none() {
            let best = (0..num_classes).fold(0, |b, g| if conf[p][g] > conf[p][b] { g } else { b });
            *m = Some(best as u32);
        }
    }
    let mapping: Vec<u32> = mapping.into_iter().map(|m| m.expect("all ids mapped")).collect();

    let mut inter = vec![0u64; num_classes];
    let mut pred_merged = vec![0u64; num_classes];
    for (p, &g) in mapping.iter().enumerate() {
        inter[g as usize] += conf[p][g as usize];
        pred_merged[g as usize] += pred_tot[p];
    }
    let per_class_iou: Vec<Option<f64>> = (0..num_classes)
        .map(|g| (gt_tot[g] > 0).then(|| inter[g] as f64 / (pred_merged[g] + gt_tot[g] - inter[g]) as f64))
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Empty("ground-truth classes"));
    }
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok(SemsegEvaluation { miou, per_class_iou, mapping })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub label_png: String,
    pub class_histogram: BTreeMap<u32, u64>,
}

/// Write `<image_id>.png` label maps (with sidecars) and `manifest.json`.
pub fn export_pseudo_labels(dir: &Path, maps: &[(String, SegmentMap)]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::with_capacity(maps.len());
    for (id, seg) in maps {
        let name = format!("{id}.png");
        png::write_label_map(seg, dir.join(&name))?;
        manifest.push(ManifestEntry { image_id: id.clone(), label_png: name, class_histogram: seg.histogram() });
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}
