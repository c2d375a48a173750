//! Thick-restart (Krylov-Schur) Lanczos for the smallest eigenpairs of a
//! sparse symmetric matrix.
//!
//! Every new Krylov vector is orthogonalized twice against the whole basis
//! and against any locked vectors, so the projected matrix `V^T A V` is
//! computed column by column and used directly in the Rayleigh-Ritz step.
//! On restart the `keep` best Ritz vectors become the new basis and the
//! last residual continues the expansion.
//!
//! A single starting vector only ever sees one direction inside an exactly
//! repeated eigenvalue. After the main run, a second run restricted to the
//! orthogonal complement of the accepted vectors looks for anything smaller
//! than the largest accepted eigenvalue and swaps it in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::symeig::sym_eigen;
use super::{fix_sign, EigenDecomposition};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 0x5EED_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosOptions {
    /// Bound on `||A y - lambda y||` for every returned pair.
    pub tol: f64,
    /// Matrix-vector products allowed per Krylov run; `None` means `20 m + 100`.
    pub max_iter: Option<usize>,
    pub seed: u64,
    /// Search the complement of the converged vectors for missed eigenvalues.
    pub deflation_check: bool,
    /// Krylov basis size; `None` picks `max(m + 32, 2 m + 16)`.
    pub basis_size: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: None, seed: DEFAULT_SEED, deflation_check: true, basis_size: None }
    }
}

impl LanczosOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// The `m` smallest eigenpairs of the symmetric matrix `a`, ascending.
pub fn smallest_eigenpairs(a: &SparseMatrix, m: usize, opts: &LanczosOptions) -> Result<EigenDecomposition> {
    let n = a.n();
    if !a.is_symmetric() {
        return Err(Error::InvalidArgument("eigensolver needs a symmetric matrix".into()));
    }
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("requested {m} eigenpairs of a {n}x{n} matrix")));
    }
    let cap = opts.max_iter.unwrap_or(20 * m + 100);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut solver = Krylov { a, rng: &mut rng, cap, tol: opts.tol, basis_size: opts.basis_size };

    let mut pairs = solver.run(&[], m)?;
    if opts.deflation_check {
        for _ in 0..m {
            if pairs.len() == n {
                break;
            }
            let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
            let extra = solver.run(&locked, 1)?.pop().expect("one pair requested");
            let largest = pairs.last().unwrap().0;
            if extra.0 < largest - opts.tol {
                pairs.pop();
                let pos = pairs.partition_point(|p| p.0 <= extra.0);
                pairs.insert(pos, extra);
            } else {
                break;
            }
        }
    }

    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (theta, mut y) in pairs {
        fix_sign(&mut y);
        residuals.push(residual(a, theta, &y));
        values.push(theta);
        vectors.push(y);
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(Error::NonConvergence { iterations: cap, residuals, worst_residual: worst });
    }
    let mut eig = EigenDecomposition::new(values, vectors, 1, n)?;
    eig.seed = Some(opts.seed);
    eig.residuals = residuals;
    Ok(eig)
}

/// `||A y - theta y||_2`.
pub(crate) fn residual(a: &SparseMatrix, theta: f64, y: &[f64]) -> f64 {
    let ay = a.mul_vec(y);
    ay.iter().zip(y).map(|(p, q)| (p - theta * q).powi(2)).sum::<f64>().sqrt()
}

struct Krylov<'a, 'r> {
    a: &'a SparseMatrix,
    rng: &'r mut ChaCha8Rng,
    cap: usize,
    tol: f64,
    basis_size: Option<usize>,
}

impl Krylov<'_, '_> {
    /// Smallest `want` eigenpairs of `a` restricted to the complement of
    /// `locked` (orthonormal vectors).
    fn run(&mut self, locked: &[Vec<f64>], want: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let n = self.a.n();
        let dim = n - locked.len();
        if want > dim {
            return Err(Error::InvalidArgument(format!("{want} pairs requested from a {dim}-dimensional subspace")));
        }
        let ncv = self.basis_size.unwrap_or((want + 32).max(2 * want + 16)).max(want + 1).min(dim);
        let keep = (want + (ncv - want) / 2).min(ncv.saturating_sub(1)).max(want);
        // Ritz estimates are trusted to a tenth of the final tolerance.
        let inner_tol = 0.1 * self.tol;

        let breakdown = 1e-12 * self.a.gershgorin_upper().abs().max(1.0);

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ncv);
        let mut h = vec![0.0; ncv * ncv];
        let mut f = self.random_orthogonal(locked, &basis);
        let mut matvecs = 0;
        let mut estimates = vec![f64::INFINITY; want];

        loop {
            // Expand to ncv vectors.
            while basis.len() < ncv {
                let j = basis.len();
                let beta = norm(&f);
                let v = if beta > breakdown {
                    f.iter().map(|x| x / beta).collect()
                } else {
                    // Invariant subspace reached: continue from a fresh direction.
                    let mut r = self.random_orthogonal(locked, &basis);
                    let rn = norm(&r);
                    r.iter_mut().for_each(|x| *x /= rn);
                    r
                };
                basis.push(v);
                let mut w = self.a.mul_vec(&basis[j]);
                matvecs += 1;
                let mut coeffs = vec![0.0; j + 1];
                for _ in 0..2 {
                    orthogonalize(&mut w, locked);
                    for (i, b) in basis.iter().enumerate() {
                        let c = dot(&w, b);
                        coeffs[i] += c;
                        axpy(-c, b, &mut w);
                    }
                }
                for (i, &c) in coeffs.iter().enumerate() {
                    h[i * ncv + j] = c;
                    h[j * ncv + i] = c;
                }
                f = w;
                if basis.len() == dim {
                    break;
                }
            }

            let k = basis.len();
            let mut hk = vec![0.0; k * k];
            for i in 0..k {
                hk[i * k..(i + 1) * k].copy_from_slice(&h[i * ncv..i * ncv + k]);
            }
            let ritz = sym_eigen(&hk, k);
            let beta = norm(&f);
            let exhausted = k == dim;
            for (i, est) in estimates.iter_mut().enumerate() {
                *est = if exhausted { 0.0 } else { beta * ritz.column(i)[k - 1].abs() };
            }
            let converged = estimates.iter().all(|&e| e <= inner_tol);
            if converged || exhausted || matvecs >= self.cap {
                if !converged && !exhausted {
                    let worst = estimates.iter().cloned().fold(0.0, f64::max);
                    return Err(Error::NonConvergence {
                        iterations: matvecs,
                        residuals: estimates,
                        worst_residual: worst,
                    });
                }
                return Ok((0..want).map(|i| (ritz.values[i], combine(&basis, ritz.column(i)))).collect());
            }

            // Thick restart: keep the best Ritz vectors, diagonal projection.
            let kept: Vec<Vec<f64>> = (0..keep).map(|i| combine(&basis, ritz.column(i))).collect();
            basis = kept;
            h.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..keep {
                h[i * ncv + i] = ritz.values[i];
            }
        }
    }

    fn random_orthogonal(&mut self, locked: &[Vec<f64>], basis: &[Vec<f64>]) -> Vec<f64> {
        let n = self.a.n();
        loop {
            let mut r: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            for _ in 0..2 {
                orthogonalize(&mut r, locked);
                orthogonalize(&mut r, basis);
            }
            if norm(&r) > 1e-8 {
                return r;
            }
        }
    }
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (b, &c) in basis.iter().zip(coeffs) {
        axpy(c, b, &mut out);
    }
    let nrm = norm(&out);
    out.iter_mut().for_each(|x| *x /= nrm);
    out
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    for b in against {
        let c = dot(w, b);
        axpy(-c, b, w);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
