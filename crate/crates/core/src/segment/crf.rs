//! Mean-field inference for a fully connected CRF with Potts compatibility
//! and two Gaussian pairwise kernels:
//!
//! ```text
//! k_g(i, j) = exp(-|p_i - p_j|^2 / 2 sx_g^2)
//! k_b(i, j) = exp(-|p_i - p_j|^2 / 2 sx_b^2 - |I_i - I_j|^2 / 2 s_rgb^2)
//! ```
//!
//! Both kernels are truncated to a square window of radius `ceil(3 sigma)`
//! around each pixel. The Gaussian term is evaluated separably; the
//! bilateral term by direct summation over the window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub iterations: usize,
    pub gaussian_sx: f64,
    pub gaussian_weight: f64,
    pub bilateral_sx: f64,
    pub bilateral_srgb: f64,
    pub bilateral_weight: f64,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            gaussian_sx: 3.0,
            gaussian_weight: 3.0,
            bilateral_sx: 80.0,
            bilateral_srgb: 13.0,
            bilateral_weight: 10.0,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.gaussian_sx, self.bilateral_sx, self.bilateral_srgb];
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(format!("CRF kernel widths must be positive: {sigmas:?}")));
        }
        if [self.gaussian_weight, self.bilateral_weight].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("CRF kernel weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn gaussian_radius(&self) -> usize {
        (3.0 * self.gaussian_sx).ceil() as usize
    }

    pub(crate) fn bilateral_radius(&self) -> usize {
        (3.0 * self.bilateral_sx).ceil() as usize
    }
}

/// Per-pixel class distribution, `probs[i * classes + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    rows: usize,
    cols: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(rows: usize, cols: usize, classes: usize, probs: Vec<f64>) -> Result<Self> {
        if classes == 0 || probs.len() != rows * cols * classes {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {rows}x{cols} with {classes} classes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument("probabilities must be finite and nonnegative".into()));
        }
        Ok(Self { rows, cols, classes, probs })
    }

    /// Two-class map from a mask: set cells get `confidence` on class 1.
    pub fn from_mask(mask: &crate::localize::BinaryMask, confidence: f64) -> Self {
        let probs = mask
            .bits()
            .iter()
            .flat_map(|&b| if b { [1.0 - confidence, confidence] } else { [confidence, 1.0 - confidence] })
            .collect();
        Self { rows: mask.rows(), cols: mask.cols(), classes: 2, probs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn argmax(&self) -> Vec<usize> {
        (0..self.rows * self.cols)
            .map(|i| {
                let p = self.pixel(i);
                (0..self.classes).fold(0, |best, l| if p[l] > p[best] { l } else { best })
            })
            .collect()
    }

    /// Largest `|sum_l p - 1|` over pixels.
    pub fn normalization_error(&self) -> f64 {
        (0..self.rows * self.cols).map(|i| (self.pixel(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Run `params.iterations` mean-field updates from the unary distribution.
/// `observe` sees the state after every iteration.
pub fn mean_field(
    img: &ImageBuffer,
    unary: &ProbabilityMap,
    params: &CrfParams,
    mut observe: impl FnMut(usize, &ProbabilityMap),
) -> Result<ProbabilityMap> {
    params.validate()?;
    if (img.height(), img.width()) != (unary.rows, unary.cols) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs unary {}x{}",
            img.height(),
            img.width(),
            unary.rows,
            unary.cols
        )));
    }
    let energy = unary_energy(unary);
    let mut q = unary.clone();
    for it in 0..params.iterations {
        q = step_with_energy(img, &energy, &q, params);
        observe(it, &q);
    }
    Ok(q)
}

/// One mean-field update of `q` given the unary distribution.
pub fn mean_field_step(
    img: &ImageBuffer,
    unary: &ProbabilityMap,
    q: &ProbabilityMap,
    params: &CrfParams,
) -> ProbabilityMap {
    step_with_energy(img, &unary_energy(unary), q, params)
}

fn unary_energy(unary: &ProbabilityMap) -> Vec<f64> {
    // Clamp so hard zeros stay finite.
    unary.probs.iter().map(|p| -p.max(1e-300).ln()).collect()
}

fn step_with_energy(img: &ImageBuffer, energy: &[f64], q: &ProbabilityMap, params: &CrfParams) -> ProbabilityMap {
    let k = q.classes;
    let gauss = gaussian_messages(q, params);
    let bilat = bilateral_messages(img, q, params);
    let mut probs = vec![0.0; q.probs.len()];
    probs.par_chunks_mut(k).enumerate().for_each(|(i, out)| {
        let total: f64 = (0..k)
            .map(|l| params.gaussian_weight * gauss[i * k + l] + params.bilateral_weight * bilat[i * k + l])
            .sum();
        for l in 0..k {
            let same = params.gaussian_weight * gauss[i * k + l] + params.bilateral_weight * bilat[i * k + l];
            // Potts: penalty is the message mass on every other label.
            out[l] = -energy[i * k + l] - (total - same);
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        out.iter_mut().for_each(|v| *v /= z);
    });
    ProbabilityMap { rows: q.rows, cols: q.cols, classes: k, probs }
}

/// `sum_{j != i, |dx|,|dy| <= r} k_g(i, j) q_j(l)` via two 1-D passes.
fn gaussian_messages(q: &ProbabilityMap, params: &CrfParams) -> Vec<f64> {
    let (rows, cols, k) = (q.rows, q.cols, q.classes);
    let r = params.gaussian_radius() as isize;
    let taps: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * params.gaussian_sx.powi(2))).exp()).collect();

    let mut horiz = vec![0.0; q.probs.len()];
    horiz.par_chunks_mut(cols * k).enumerate().for_each(|(y, row)| {
        for x in 0..cols {
            let lo = (x as isize - r).max(0) as usize;
            let hi = (x as isize + r).min(cols as isize - 1) as usize;
            for xx in lo..=hi {
                let t = taps[(xx as isize - x as isize + r) as usize];
                let src = &q.probs[(y * cols + xx) * k..(y * cols + xx + 1) * k];
                for l in 0..k {
                    row[x * k + l] += t * src[l];
                }
            }
        }
    });
    let mut out = vec![0.0; q.probs.len()];
    out.par_chunks_mut(cols * k).enumerate().for_each(|(y, row)| {
        let lo = (y as isize - r).max(0) as usize;
        let hi = (y as isize + r).min(rows as isize - 1) as usize;
        for yy in lo..=hi {
            let t = taps[(yy as isize - y as isize + r) as usize];
            let src = &horiz[yy * cols * k..(yy + 1) * cols * k];
            for (o, s) in row.iter_mut().zip(src) {
                *o += t * s;
            }
        }
        // Remove the self term (kernel value 1).
        for x in 0..cols {
            for l in 0..k {
                row[x * k + l] -= q.probs[(y * cols + x) * k + l];
            }
        }
    });
    out
}

// TODO: permutohedral-lattice filtering for the bilateral term; the windowed
// sum costs O(MN (6 sx)^2) and dominates full-resolution refinement.
fn bilateral_messages(img: &ImageBuffer, q: &ProbabilityMap, params: &CrfParams) -> Vec<f64> {
    let (rows, cols, k) = (q.rows, q.cols, q.classes);
    let r = params.bilateral_radius();
    let rs = r.min(rows.max(cols));
    let spatial: Vec<f64> = (0..=rs)
        .flat_map(|dy| (0..=rs).map(move |dx| (dy, dx)))
        .map(|(dy, dx)| (-((dy * dy + dx * dx) as f64) / (2.0 * params.bilateral_sx.powi(2))).exp())
        .collect();
    let color: Vec<f64> =
        (0..=3 * 255 * 255).map(|d2| (-(d2 as f64) / (2.0 * params.bilateral_srgb.powi(2))).exp()).collect();
    let px = img.pixels();

    let mut out = vec![0.0; q.probs.len()];
    out.par_chunks_mut(cols * k).enumerate().for_each(|(y, row)| {
        let y0 = y.saturating_sub(rs);
        let y1 = (y + rs).min(rows - 1);
        for x in 0..cols {
            let x0 = x.saturating_sub(rs);
            let x1 = (x + rs).min(cols - 1);
            let ci = px[y * cols + x];
            let acc = &mut row[x * k..(x + 1) * k];
            for yy in y0..=y1 {
                let srow = &spatial[y.abs_diff(yy) * (rs + 1)..];
                for xx in x0..=x1 {
                    if yy == y && xx == x {
                        continue;
                    }
                    let j = yy * cols + xx;
                    let cj = px[j];
                    let d2: usize = (0..3).map(|c| (ci[c] as isize - cj[c] as isize).pow(2) as usize).sum();
                    let w = srow[x.abs_diff(xx)] * color[d2];
                    for l in 0..k {
                        acc[l] += w * q.probs[j * k + l];
                    }
                }
            }
        }
    });
    out
}

/// Refine a coarse mask against the full-resolution image: nearest-neighbor
/// upsampling, a two-class unary with `confidence` on the coarse label, mean
/// field, argmax.
pub fn crf_refine(
    img: &ImageBuffer,
    coarse: &crate::localize::BinaryMask,
    params: &CrfParams,
    confidence: f64,
) -> Result<crate::localize::BinaryMask> {
    if !(0.5..1.0).contains(&confidence) {
        return Err(Error::InvalidArgument(format!("unary confidence {confidence} must lie in [0.5, 1)")));
    }
    if coarse.rows() == 0 || coarse.cols() == 0 {
        return Err(Error::Empty("coarse mask"));
    }
    // Downsampling the mask would discard information the CRF needs.
    if coarse.rows() > img.height() || coarse.cols() > img.width() {
        return Err(Error::DimensionMismatch(format!(
            "coarse mask {}x{} is larger than the {}x{} image",
            coarse.rows(),
            coarse.cols(),
            img.height(),
            img.width()
        )));
    }
    let up = coarse.resized_nearest(img.height(), img.width());
    let unary = ProbabilityMap::from_mask(&up, confidence);
    let q = mean_field(img, &unary, params, |_, _| {})?;
    let labels = q.argmax();
    crate::localize::BinaryMask::new(img.height(), img.width(), labels.into_iter().map(|l| l == 1).collect())
}
