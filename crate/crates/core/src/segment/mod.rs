//! Single-object segmentation: coarse Fiedler mask, CRF refinement, mIoU.

mod crf;

pub use crf::{crf_refine, mean_field, mean_field_step, CrfParams, ProbabilityMap};

use crate::error::{Error, Result};
use crate::localize::{fiedler_bisect, select_foreground, BinaryMask};
use crate::semseg::SegmentMap;
use crate::spectral::EigenDecomposition;

/// Unary probability of the coarse label.
pub const DEFAULT_UNARY_CONFIDENCE: f64 = 0.7;

/// Gt cells with this label are excluded from [`miou`].
pub const IGNORE_LABEL: u32 = 255;

/// Foreground side of the Fiedler bisection on the eigenvector grid.
pub fn coarse_object_mask(eig: &EigenDecomposition) -> Result<BinaryMask> {
    Ok(select_foreground(&fiedler_bisect(eig)?))
}

/// Mean over classes present in `gt` of the per-class IoU.
pub fn miou(pred: &SegmentMap, gt: &SegmentMap, num_classes: usize) -> Result<f64> {
    let (inter, union) = confusion_counts(pred, gt, num_classes)?;
    let present: Vec<usize> = (0..num_classes).filter(|&c| union[c].1).collect();
    if present.is_empty() {
        return Err(Error::Empty("ground-truth classes"));
    }
    Ok(present.iter().map(|&c| inter[c] as f64 / union[c].0 as f64).sum::<f64>() / present.len() as f64)
}

/// Per-class intersection and (union size, present in gt).
fn confusion_counts(pred: &SegmentMap, gt: &SegmentMap, num_classes: usize) -> Result<(Vec<u64>, Vec<(u64, bool)>)> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    let mut inter = vec![0u64; num_classes];
    let mut pred_count = vec![0u64; num_classes];
    let mut gt_count = vec![0u64; num_classes];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == IGNORE_LABEL {
            continue;
        }
        for l in [p, g] {
            if l as usize >= num_classes {
                return Err(Error::InvalidArgument(format!("label {l} out of range for {num_classes} classes")));
            }
        }
        pred_count[p as usize] += 1;
        gt_count[g as usize] += 1;
        if p == g {
            inter[p as usize] += 1;
        }
    }
    let union = (0..num_classes).map(|c| (pred_count[c] + gt_count[c] - inter[c], gt_count[c] > 0)).collect();
    Ok((inter, union))
}
