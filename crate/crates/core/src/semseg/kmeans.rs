//! Seeded k-means: k-means++ seeding, Lloyd iterations, and a final
//! single-point-move (Hartigan) pass, best of several restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 300;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Independent restarts; the lowest-inertia run wins (first on ties).
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iter: KMEANS_MAX_ITER, n_init: DEFAULT_N_INIT }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub inertia: f64,
    /// Inertia after each Lloyd update of the winning run.
    pub history: Vec<f64>,
}

impl ClusterModel {
    /// Index of the nearest centroid (lowest index on ties).
    pub fn predict(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(points, k, seed, &KMeansOptions::default())
}

pub fn kmeans_with(points: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { needed: k, available: points.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(format!("point of dimension {} among dimension {dim}", p.len())));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterModel> = None;
    for _ in 0..opts.n_init.max(1) {
        let init = plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, opts.max_iter, seed);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut idx = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points.par_iter().map(|p| nearest(centroids, p)).collect()
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    (sums, counts)
}

fn inertia_of(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize, seed: u64) -> ClusterModel {
    let k = centroids.len();
    let mut labels: Vec<usize> = assign(points, &centroids).into_iter().map(|a| a.0).collect();
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let (mut c, mut counts) = means(points, &labels, k);
        // Refill empty clusters with the point farthest from its centroid.
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, sq_dist(&points[i], &c[labels[i]])))
                .fold(None, |acc: Option<(usize, f64)>, x| if acc.is_none_or(|a| x.1 > a.1) { Some(x) } else { acc });
            let Some((i, _)) = far else { break };
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] = 1;
            let (m, n) = means(points, &labels, k);
            c = m;
            counts = n;
        }
        centroids = c;
        history.push(inertia_of(points, &centroids, &labels));
        let next: Vec<usize> = assign(points, &centroids).into_iter().map(|a| a.0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    hartigan(points, &mut labels, k);
    let (centroids, _) = means(points, &labels, k);
    let inertia = inertia_of(points, &centroids, &labels);
    ClusterModel { k, centroids, assignments: labels, seed, inertia, history }
}

/// Move single points while doing so strictly lowers the inertia. Escapes
/// Lloyd fixed points that are not local optima under point moves.
fn hartigan(points: &[Vec<f64>], labels: &mut [usize], k: usize) {
    let (mut centroids, mut counts) = means(points, labels, k);
    let mut moved = true;
    let mut sweeps = 0;
    while moved && sweeps < KMEANS_MAX_ITER {
        moved = false;
        sweeps += 1;
        for (i, p) in points.iter().enumerate() {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(p, &centroids[a]);
            let mut best = (a, removal);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * sq_dist(p, &centroids[b]);
                // Relative margin keeps rounding noise from cycling.
                if add < best.1 * (1.0 - 1e-12) {
                    best = (b, add);
                }
            }
            let b = best.0;
            if b != a {
                let nb = counts[b] as f64;
                for (d, v) in p.iter().enumerate() {
                    centroids[a][d] = (centroids[a][d] * na - v) / (na - 1.0);
                    centroids[b][d] = (centroids[b][d] * nb + v) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                labels[i] = b;
                moved = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        let m = kmeans(&pts, 2, 1).unwrap();
        let mut c = m.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert_eq!(m.inertia, 1.0);
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = kmeans(&pts, 6, 3).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut a = m.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn duplicates_and_errors() {
        let pts = vec![vec![1.0]; 5];
        let m = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(m.inertia, 0.0);
        assert!(matches!(kmeans(&pts, 6, 0), Err(Error::TooFewPoints { needed: 6, available: 5 })));
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 0).is_err());
    }

    #[test]
    fn lloyd_history_non_increasing_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen(), rng.gen(), rng.gen()]).collect();
        let a = kmeans(&pts, 7, 11).unwrap();
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(a.inertia <= *a.history.last().unwrap() * (1.0 + 1e-12));
        assert_eq!(a, kmeans(&pts, 7, 11).unwrap());
        for (p, &l) in pts.iter().zip(&a.assignments) {
            assert_eq!(a.predict(p), l);
        }
    }
}
