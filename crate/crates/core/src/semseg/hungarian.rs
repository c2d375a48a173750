use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `assignment[row] = column`.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

impl Matching {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment.iter().copied().enumerate()
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Among optimal
/// assignments the lexicographically smallest `assignment` is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Matching> {
    let n = cost.len();
    if let Some(r) = cost.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!("cost row of length {} in a {n}-row matrix", r.len())));
    }
    if let Some(i) = cost.iter().flatten().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if n == 0 {
        return Ok(Matching { assignment: Vec::new(), cost: 0.0 });
    }
    let scale = cost.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(1.0) * n as f64;

    // Fix rows in order, each to the smallest column that keeps the total
    // optimal.
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut assignment = vec![usize::MAX; n];
    let mut fixed_cost = 0.0;
    let (target, _) = solve(cost);
    while let Some(&r) = rows.first() {
        let rest_rows: Vec<usize> = rows[1..].to_vec();
        let mut chosen = None;
        for (ci, &c) in cols.iter().enumerate() {
            let rest_cols: Vec<usize> = cols.iter().enumerate().filter(|&(k, _)| k != ci).map(|(_, &c)| c).collect();
            let (rest, _) = solve(&sub(cost, &rest_rows, &rest_cols));
            if fixed_cost + cost[r][c] + rest <= target + tol {
                chosen = Some((ci, c));
                break;
            }
        }
        let (ci, c) = chosen.expect("some column attains the optimum");
        assignment[r] = c;
        fixed_cost += cost[r][c];
        cols.remove(ci);
        rows.remove(0);
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    Ok(Matching { assignment, cost: total })
}

fn sub(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| cols.iter().map(|&c| cost[r][c]).collect()).collect()
}

/// Shortest augmenting path with potentials, O(n^3).
fn solve(a: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = a.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| a[r][c]).sum();
    (total, assignment)
}
