//! Helpers shared by the integration suites.

#![allow(dead_code)]

use eigenseg::segment::{CrfParams, ProbabilityMap};
use eigenseg::tensor_io::ImageBuffer;
use rand::{Rng, SeedableRng};

/// One mean-field update by explicit summation over all pixel pairs.
pub fn explicit_step(img: &ImageBuffer, unary: &ProbabilityMap, q: &ProbabilityMap, p: &CrfParams) -> Vec<f64> {
    let (rows, cols, k) = (q.rows(), q.cols(), q.classes());
    let n = rows * cols;
    let rg = (3.0 * p.gaussian_sx).ceil() as i64;
    let rb = (3.0 * p.bilateral_sx).ceil() as i64;
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let (yi, xi) = ((i / cols) as i64, (i % cols) as i64);
        let mut msg = vec![0.0; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let (yj, xj) = ((j / cols) as i64, (j % cols) as i64);
            let (dy, dx) = ((yi - yj).abs(), (xi - xj).abs());
            let d2 = (dy * dy + dx * dx) as f64;
            let mut w = 0.0;
            if dy <= rg && dx <= rg {
                w += p.gaussian_weight * (-d2 / (2.0 * p.gaussian_sx * p.gaussian_sx)).exp();
            }
            if dy <= rb && dx <= rb {
                let (a, b) = (img.pixels()[i], img.pixels()[j]);
                let c2: f64 = (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum();
                w += p.bilateral_weight
                    * (-d2 / (2.0 * p.bilateral_sx * p.bilateral_sx)
                        - c2 / (2.0 * p.bilateral_srgb * p.bilateral_srgb))
                        .exp();
            }
            for l in 0..k {
                msg[l] += w * q.pixel(j)[l];
            }
        }
        let total: f64 = msg.iter().sum();
        let logits: Vec<f64> = (0..k).map(|l| unary.pixel(i)[l].ln() - (total - msg[l])).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        for l in 0..k {
            out[i * k + l] = (logits[l] - max).exp() / z;
        }
    }
    out
}

pub fn random_problem(seed: u64, rows: usize, cols: usize, k: usize) -> (ImageBuffer, ProbabilityMap) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let img = ImageBuffer::from_fn(rows, cols, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
    let mut probs = Vec::new();
    for _ in 0..rows * cols {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / s));
    }
    (img, ProbabilityMap::new(rows, cols, k, probs).unwrap())
}
