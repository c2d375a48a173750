//! Exact k-nearest-neighbor search over fixed-dimension points.
//!
//! Neighbors are ordered by `(squared distance, index)`, so ties resolve to
//! the smaller index and results match a brute-force scan exactly.

const LEAF_SIZE: usize = 16;

pub(crate) struct KdTree<'a, const D: usize> {
    points: &'a [[f64; D]],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

impl<'a, const D: usize> KdTree<'a, D> {
    pub fn build(points: &'a [[f64; D]]) -> Self {
        let mut tree = Self { points, order: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a][dim].total_cmp(&pts[b][dim]).then(a.cmp(&b)));
        let value = pts[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for d in 0..D {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.points[i][d])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        best.0
    }

    /// The `k` nearest points to `points[query]`, excluding `query` itself,
    /// as `(index, squared distance)` in ascending order.
    pub fn nearest_excluding(&self, query: usize, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, &self.points[query], query, k, &mut best);
        }
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search(&self, node: usize, q: &[f64; D], skip: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == skip {
                        continue;
                    }
                    let d = sq_dist(q, &self.points[i]);
                    offer(best, k, (d, i));
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, best);
                // Equal bounds are still visited: an equidistant point may
                // carry a smaller index.
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, skip, k, best);
                }
            }
        }
    }
}

fn offer(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    let key = |e: &(f64, usize)| (e.0, e.1);
    if best.len() == k {
        let worst = best[k - 1];
        if cand.0 > worst.0 || (cand.0 == worst.0 && cand.1 > worst.1) {
            return;
        }
        best.pop();
    }
    let pos = best.partition_point(|e| key(e) < key(&cand));
    best.insert(pos, cand);
}

#[inline]
pub(crate) fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute(points: &[[f64; 3]], q: usize, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> =
            (0..points.len()).filter(|&i| i != q).map(|i| (sq_dist(&points[q], &points[i]), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(d, i)| (i, d)).collect()
    }

    #[test]
    fn matches_brute_force_on_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..300).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let tree = KdTree::build(&pts);
        for q in 0..pts.len() {
            assert_eq!(tree.nearest_excluding(q, 7), brute(&pts, q, 7));
        }
    }

    #[test]
    fn ties_break_by_index_on_lattice() {
        // Integer lattice: many exactly equidistant neighbors.
        let pts: Vec<[f64; 3]> = (0..125).map(|i| [(i % 5) as f64, (i / 5 % 5) as f64, (i / 25) as f64]).collect();
        let tree = KdTree::build(&pts);
        for q in 0..pts.len() {
            for k in [1, 4, 9] {
                assert_eq!(tree.nearest_excluding(q, k), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn k_larger_than_population() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0]];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.nearest_excluding(0, 5), vec![(1, 1.0)]);
    }
}
