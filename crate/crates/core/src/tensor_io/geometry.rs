use super::ImageBuffer;
use crate::error::{Error, Result};
use crate::semseg::SegmentMap;

/// Crop to `floor(M/P)*P x floor(N/P)*P`, dropping the bottom rows and the
/// right columns so patch-grid coordinates stay anchored at the top-left.
pub fn crop_to_patch_multiple(img: &ImageBuffer, patch: usize) -> Result<ImageBuffer> {
    if patch == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    let (m, n) = (img.height(), img.width());
    if m < patch || n < patch {
        return Err(Error::SmallerThanPatch { rows: m, cols: n, patch });
    }
    let (rows, cols) = (m / patch * patch, n / patch * patch);
    if rows == m && cols == n {
        return Ok(img.clone());
    }
    Ok(img.top_left(rows, cols))
}

/// Grow a label grid to `target_rows x target_cols` by repeating its last
/// column and last row.
pub fn replicate_pad(seg: &SegmentMap, target_rows: usize, target_cols: usize) -> Result<SegmentMap> {
    let (rows, cols) = (seg.rows(), seg.cols());
    if target_rows < rows || target_cols < cols {
        return Err(Error::InvalidArgument(format!(
            "pad target {target_rows}x{target_cols} is smaller than the {rows}x{cols} input"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("replicate_pad input"));
    }
    let mut labels = Vec::with_capacity(target_rows * target_cols);
    for y in 0..target_rows {
        let row = &seg.labels()[y.min(rows - 1) * cols..][..cols];
        labels.extend_from_slice(row);
        labels.extend(std::iter::repeat_n(row[cols - 1], target_cols - cols));
    }
    SegmentMap::with_background(target_rows, target_cols, labels, seg.background())
}
