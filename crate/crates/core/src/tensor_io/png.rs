//! PNG encoding for images, binary masks, label maps and 16-bit mattes.
//!
//! Label maps are single-channel 8-bit PNGs whose gray level is the label id,
//! accompanied by a JSON sidecar mapping gray level to label id.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer as RawBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::ImageBuffer;
use crate::error::{Error, Result};
use crate::semseg::SegmentMap;

pub fn read_rgb(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    ImageBuffer::new(h as usize, w as usize, pixels)
}

pub fn write_rgb(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let mut raw = RgbImage::new(img.width() as u32, img.height() as u32);
    for (dst, src) in raw.pixels_mut().zip(img.pixels()) {
        *dst = Rgb(*src);
    }
    raw.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Single-channel 8-bit gray image as `(rows, cols, values)`.
pub fn read_gray(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

pub fn write_gray(rows: usize, cols: usize, values: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let raw = GrayImage::from_raw(cols as u32, rows as u32, values.to_vec())
        .ok_or_else(|| Error::DimensionMismatch(format!("{} gray values for {rows}x{cols}", values.len())))?;
    raw.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// 16-bit gray PNG; `values` are quantized from `[0, 1]`.
pub fn write_gray16(rows: usize, cols: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u16> = values.iter().map(|a| (a.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let raw: RawBuffer<Luma<u16>, Vec<u16>> = RawBuffer::from_raw(cols as u32, rows as u32, data)
        .ok_or_else(|| Error::DimensionMismatch(format!("{} matte values for {rows}x{cols}", values.len())))?;
    raw.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_gray16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let img = image::open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

/// Sidecar for a label PNG: gray level to label id, plus the background id
/// when one is designated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSidecar {
    pub levels: BTreeMap<u8, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<u32>,
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Write `<name>.png` and its `<name>.json` sidecar. Labels must fit in 8 bits.
pub fn write_label_map(seg: &SegmentMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut levels = BTreeMap::new();
    let mut gray = Vec::with_capacity(seg.labels().len());
    for &l in seg.labels() {
        let g =
            u8::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l} does not fit in an 8-bit PNG")))?;
        levels.insert(g, l);
        gray.push(g);
    }
    write_gray(seg.rows(), seg.cols(), &gray, path)?;
    let sidecar = LabelSidecar { levels, background: seg.background() };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

/// Read a label PNG. The sidecar is used when present; otherwise gray levels
/// are taken as label ids.
pub fn read_label_map(path: impl AsRef<Path>) -> Result<SegmentMap> {
    let path = path.as_ref();
    let (rows, cols, gray) = read_gray(path)?;
    let side = sidecar_path(path);
    let sidecar: Option<LabelSidecar> =
        if side.exists() { Some(serde_json::from_slice(&fs::read(&side)?)?) } else { None };
    let labels = gray
        .iter()
        .map(|&g| match &sidecar {
            Some(s) => s.levels.get(&g).copied().unwrap_or(g as u32),
            None => g as u32,
        })
        .collect();
    SegmentMap::with_background(rows, cols, labels, sidecar.and_then(|s| s.background))
}
