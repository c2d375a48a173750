//! Planted scenes with known ground truth, for tests and demos.
//!
//! Every region of class `c` gets features near a class prototype and a
//! color near a class palette entry, so the correct decomposition is known
//! in advance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::localize::BoundingBox;
use crate::semseg::SegmentMap;
use crate::tensor_io::{FeatureMap, ImageBuffer};

const PALETTE: [[u8; 3]; 6] =
    [[70, 130, 70], [200, 60, 50], [40, 70, 190], [220, 200, 60], [150, 60, 170], [60, 190, 200]];

/// An object occupying grid cells `[x1, x2) x [y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedObject {
    pub class: u32,
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch: usize,
    pub channels: usize,
    /// Uniform feature noise amplitude per channel.
    pub feature_noise: f32,
    /// Uniform color noise amplitude per channel.
    pub color_noise: u8,
    pub objects: Vec<PlantedObject>,
}

#[derive(Debug, Clone)]
pub struct PlantedScene {
    pub image: ImageBuffer,
    pub features: FeatureMap,
    /// Class per pixel, background 0.
    pub labels: SegmentMap,
    /// Pixel box of each object, in `objects` order.
    pub boxes: Vec<BoundingBox>,
}

/// Class prototype: a shared component plus a class-specific axis, so
/// distinct classes have small positive similarity.
fn prototype(class: u32, channels: usize) -> Vec<f32> {
    let mut v = vec![0.02f32; channels];
    v[class as usize % channels] += 1.0;
    v
}

pub fn planted_scene(spec: &SceneSpec, seed: u64) -> Result<PlantedScene> {
    let (gr, gc, p, c) = (spec.grid_rows, spec.grid_cols, spec.patch, spec.channels);
    if gr == 0 || gc == 0 || p == 0 || c < 2 {
        return Err(Error::InvalidArgument("scene needs a nonempty grid, a patch size and >= 2 channels".into()));
    }
    let mut cells = vec![0u32; gr * gc];
    let mut boxes = Vec::new();
    for o in &spec.objects {
        if o.x1 >= o.x2 || o.y1 >= o.y2 || o.x2 > gc || o.y2 > gr || o.class == 0 {
            return Err(Error::InvalidArgument(format!("object {o:?} does not fit the {gr}x{gc} grid")));
        }
        for y in o.y1..o.y2 {
            cells[y * gc + o.x1..y * gc + o.x2].fill(o.class);
        }
        boxes.push(BoundingBox::new((o.x1 * p) as u32, (o.y1 * p) as u32, (o.x2 * p) as u32, (o.y2 * p) as u32)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gr * gc;
    let mut data = vec![0.0f32; c * n];
    for (i, &cls) in cells.iter().enumerate() {
        for (k, v) in prototype(cls, c).into_iter().enumerate() {
            data[k * n + i] = v + rng.gen_range(-1.0..=1.0) * spec.feature_noise;
        }
    }
    let features = FeatureMap::new(c, gr, gc, p, data)?;
    let (rows, cols) = (gr * p, gc * p);
    let noise = spec.color_noise as i16;
    let image = ImageBuffer::from_fn(rows, cols, |y, x| {
        let base = PALETTE[cells[(y / p) * gc + x / p] as usize % PALETTE.len()];
        std::array::from_fn(|ch| (base[ch] as i16 + rng.gen_range(-noise..=noise)).clamp(0, 255) as u8)
    });
    let labels = SegmentMap::with_background(
        rows,
        cols,
        (0..rows * cols).map(|i| cells[(i / cols / p) * gc + (i % cols) / p]).collect(),
        Some(0),
    )?;
    Ok(PlantedScene { image, features, labels, boxes })
}

/// A scene with one object of class 1 at a random position and size (at
/// most a quarter of each grid dimension plus one, at least 2x2).
pub fn random_single_object(grid: usize, patch: usize, seed: u64) -> Result<PlantedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x000B_1EC7);
    let h = rng.gen_range(2..=grid / 4 + 1);
    let w = rng.gen_range(2..=grid / 4 + 1);
    let y1 = rng.gen_range(0..=grid - h);
    let x1 = rng.gen_range(0..=grid - w);
    let spec = SceneSpec {
        grid_rows: grid,
        grid_cols: grid,
        patch,
        channels: 8,
        feature_noise: 0.05,
        color_noise: 6,
        objects: vec![PlantedObject { class: 1, x1, y1, x2: x1 + w, y2: y1 + h }],
    };
    planted_scene(&spec, seed)
}

/// A scene with one object of each class `1..=classes`, laid out in
/// non-overlapping vertical bands so no object touches another.
pub fn random_multi_object(grid: usize, patch: usize, classes: u32, seed: u64) -> Result<PlantedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E_6A);
    let band = grid / classes as usize;
    if band < 4 {
        return Err(Error::InvalidArgument(format!("grid {grid} too small for {classes} objects")));
    }
    let mut objects = Vec::new();
    for c in 0..classes {
        let w = rng.gen_range(2..=band - 2);
        let h = rng.gen_range(2..=grid / 3);
        let x1 = c as usize * band + rng.gen_range(1..=band - 1 - w);
        let y1 = rng.gen_range(0..=grid - h);
        objects.push(PlantedObject { class: c + 1, x1, y1, x2: x1 + w, y2: y1 + h });
    }
    let spec = SceneSpec {
        grid_rows: grid,
        grid_cols: grid,
        patch,
        channels: 8,
        feature_noise: 0.05,
        color_noise: 6,
        objects,
    };
    planted_scene(&spec, seed)
}
