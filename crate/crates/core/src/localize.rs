//! Single-object localization from the Fiedler vector.
//!
//! The first eigenvector with a nonzero eigenvalue is split by sign, the
//! smaller side is taken as foreground, its largest 4-connected component
//! is kept, and the component's bounding box is scaled from grid cells to
//! pixels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::EigenDecomposition;

/// Eigenvalues at or below this are treated as zero modes.
pub const NONZERO_EIGENVALUE: f64 = 1e-6;

/// Pixel box, inclusive-exclusive: `x1 <= x < x2`, `y1 <= y < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BoundingBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidArgument(format!("degenerate box ({x1}, {y1}, {x2}, {y2})")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) as f64 * (self.y2 - self.y1) as f64
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!("{} mask cells for {rows}x{cols}", bits.len())));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let bits = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.cols + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Nearest-neighbor resize with pixel-center sampling.
    pub fn resized_nearest(&self, rows: usize, cols: usize) -> Self {
        let src =
            |i: usize, from: usize, to: usize| (((i as f64 + 0.5) * from as f64 / to as f64) as usize).min(from - 1);
        let ys: Vec<usize> = (0..rows).map(|y| src(y, self.rows, rows)).collect();
        let xs: Vec<usize> = (0..cols).map(|x| src(x, self.cols, cols)).collect();
        Self::from_fn(rows, cols, |y, x| self.get(ys[y], xs[x]))
    }
}

/// Sign split of the first eigenvector whose eigenvalue exceeds
/// [`NONZERO_EIGENVALUE`]: cells with `y >= 0` are set.
pub fn fiedler_bisect(eig: &EigenDecomposition) -> Result<BinaryMask> {
    let idx = fiedler_index(eig)?;
    let bits = eig.vector(idx).iter().map(|&v| v >= 0.0).collect();
    BinaryMask::new(eig.rows(), eig.cols(), bits)
}

pub fn fiedler_index(eig: &EigenDecomposition) -> Result<usize> {
    eig.values()
        .iter()
        .position(|&v| v > NONZERO_EIGENVALUE)
        .ok_or_else(|| Error::DegenerateSpectrum(format!("all {} computed eigenvalues are zero", eig.len())))
}

/// The side of the split with fewer cells, as a mask of set cells. An exact
/// tie keeps the input's set side.
pub fn select_foreground(mask: &BinaryMask) -> BinaryMask {
    let ones = mask.count();
    if ones <= mask.bits.len() - ones {
        mask.clone()
    } else {
        mask.complement()
    }
}

/// Keep only the largest 4-connected component of set cells. Among equal
/// sizes the component whose first cell comes first in row-major order wins.
pub fn largest_connected_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let (rows, cols) = (mask.rows, mask.cols);
    let mut label = vec![usize::MAX; rows * cols];
    let mut best: Option<(usize, usize)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..rows * cols {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (y, x) = (i / cols, i % cols);
            let mut visit = |j: usize| {
                if mask.bits[j] && label[j] == usize::MAX {
                    label[j] = id;
                    queue.push_back(j);
                }
            };
            if y > 0 {
                visit(i - cols);
            }
            if y + 1 < rows {
                visit(i + cols);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < cols {
                visit(i + 1);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let (id, _) = best.ok_or(Error::Empty("largest_connected_component mask"))?;
    Ok(BinaryMask { rows, cols, bits: label.iter().map(|&l| l == id).collect() })
}

/// Tight box around the set cells, scaled by `cell` pixels per grid cell.
pub fn mask_to_bbox(mask: &BinaryMask, cell: usize) -> Result<BoundingBox> {
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        let (y, x) = (i / mask.cols, i % mask.cols);
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) = ext.ok_or(Error::Empty("mask_to_bbox mask"))?;
    let px = |v: usize| (v * cell) as u32;
    BoundingBox::new(px(x0), px(y0), px(x1 + 1), px(y1 + 1))
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = a.x2.min(b.x2).saturating_sub(a.x1.max(b.x1)) as f64;
    let iy = a.y2.min(b.y2).saturating_sub(a.y1.max(b.y1)) as f64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Best IoU of `pred` against any ground-truth box (0 when there are none).
pub fn best_iou(pred: &BoundingBox, gts: &[BoundingBox]) -> f64 {
    gts.iter().map(|g| iou(pred, g)).fold(0.0, f64::max)
}

/// Fraction of images whose prediction has IoU > 0.5 with some
/// ground-truth box.
pub fn corloc(preds: &[BoundingBox], gts: &[Vec<BoundingBox>]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} ground-truth entries",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("corloc image list"));
    }
    let hits = preds.iter().zip(gts).filter(|(p, g)| best_iou(p, g) > 0.5).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Intermediate masks and the final box of one localization.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub fiedler_index: usize,
    pub bisection: BinaryMask,
    pub foreground: BinaryMask,
    pub component: BinaryMask,
    pub bbox: BoundingBox,
}

/// sign split, smaller side, largest component, box.
pub fn localize(eig: &EigenDecomposition, cell: usize) -> Result<Localization> {
    let fiedler_index = fiedler_index(eig)?;
    let bisection = fiedler_bisect(eig)?;
    let foreground = select_foreground(&bisection);
    let component = largest_connected_component(&foreground)?;
    let bbox = mask_to_bbox(&component, cell)?;
    Ok(Localization { fiedler_index, bisection, foreground, component, bbox })
}
