use crate::error::{Error, Result};

/// Bilinear resampling of a `rows x cols` row-major grid with pixel-center
/// sample positions: output cell `i` samples the input at
/// `(i + 0.5) * in / out - 0.5`, clamped to the valid range. Constant grids
/// stay constant and output values never leave `[min, max]` of the input.
pub fn bilinear_resize(grid: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || grid.is_empty() {
        return Err(Error::Empty("bilinear_resize input grid"));
    }
    if grid.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!("grid has {} values for {rows}x{cols}", grid.len())));
    }
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::InvalidArgument("output dims must be at least 1".into()));
    }
    if out_rows == rows && out_cols == cols {
        return Ok(grid.to_vec());
    }

    let ys: Vec<_> = (0..out_rows).map(|i| taps(i, rows, out_rows)).collect();
    let xs: Vec<_> = (0..out_cols).map(|j| taps(j, cols, out_cols)).collect();
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for &(y0, y1, fy) in &ys {
        let r0 = &grid[y0 * cols..(y0 + 1) * cols];
        let r1 = &grid[y1 * cols..(y1 + 1) * cols];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    Ok(out)
}

fn taps(i: usize, size_in: usize, size_out: usize) -> (usize, usize, f64) {
    let scale = size_in as f64 / size_out as f64;
    let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (size_in - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(size_in - 1);
    (lo, hi, src - lo as f64)
}
