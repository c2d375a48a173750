//! Feature tensors, RGB images and the small set of grid utilities every
//! pipeline shares: the DSFT binary format, pixel-center bilinear resampling,
//! HSV conversion, cropping to the patch grid and edge replication.

mod color;
mod dsft;
mod geometry;
pub mod png;
mod resample;

pub use color::{rgb_to_hsv, HsvPixel};
pub use dsft::{
    read_feature_map, read_feature_map_file, write_feature_map, write_feature_map_file, DSFT_HEADER_LEN, DSFT_MAGIC,
    DSFT_VERSION,
};
pub use geometry::{crop_to_patch_multiple, replicate_pad};
pub use resample::bilinear_resize;

use crate::error::{Error, Result};

/// Dense `C x h x w` feature tensor for one image, stored row-major as
/// `[c][y][x]`. `patch_size` is the number of pixels per patch side.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    patch_size: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, patch_size: usize, data: Vec<f32>) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidArgument("patch size must be positive".into()));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "feature data has {} values, dims {channels}x{height}x{width} need {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { channels, height, width, patch_size, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize, patch_size: usize) -> Self {
        Self::new(channels, height, width, patch_size, vec![0.0; channels * height * width])
            .expect("zero tensor is always valid")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Number of spatial locations `h * w`.
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `C`-vector at one spatial location, gathered across planes.
    pub fn location_vector(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x) as f64).collect()
    }

    /// Location-major copy: `locations x C`, row `y * w + x`.
    pub fn to_location_major(&self) -> Vec<f64> {
        let n = self.locations();
        let mut out = vec![0.0; n * self.channels];
        for c in 0..self.channels {
            let plane = &self.data[c * n..(c + 1) * n];
            for (i, v) in plane.iter().enumerate() {
                out[i * self.channels + c] = *v as f64;
            }
        }
        out
    }

    /// Bilinearly resample every channel plane to `out_h x out_w`. The patch
    /// size is carried over unchanged.
    pub fn resized(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == self.height && out_w == self.width {
            return Ok(self.clone());
        }
        let n = self.locations();
        let mut data = Vec::with_capacity(self.channels * out_h * out_w);
        for c in 0..self.channels {
            let plane: Vec<f64> = self.data[c * n..(c + 1) * n].iter().map(|&v| v as f64).collect();
            let out = bilinear_resize(&plane, self.height, self.width, out_h, out_w)?;
            data.extend(out.into_iter().map(|v| v as f32));
        }
        Self::new(self.channels, out_h, out_w, self.patch_size, data)
    }
}

/// 8-bit RGB image, `height x width`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "image has {} pixels, dims {height}x{width} need {}",
                pixels.len(),
                height * width
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        Self { height, width, pixels: vec![rgb; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resample with pixel-center sampling, rounded back to 8 bits.
    pub fn resized(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == self.height && out_w == self.width {
            return Ok(self.clone());
        }
        let mut planes = Vec::with_capacity(3);
        for ch in 0..3 {
            let plane: Vec<f64> = self.pixels.iter().map(|p| p[ch] as f64).collect();
            planes.push(bilinear_resize(&plane, self.height, self.width, out_h, out_w)?);
        }
        let pixels = (0..out_h * out_w)
            .map(|i| {
                let q = |ch: usize| planes[ch][i].round().clamp(0.0, 255.0) as u8;
                [q(0), q(1), q(2)]
            })
            .collect();
        Ok(Self { height: out_h, width: out_w, pixels })
    }

    /// Contiguous sub-rectangle starting at the top-left origin.
    pub(crate) fn top_left(&self, rows: usize, cols: usize) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols);
        for y in 0..rows {
            pixels.extend_from_slice(&self.pixels[y * self.width..y * self.width + cols]);
        }
        Self { height: rows, width: cols, pixels }
    }
}
