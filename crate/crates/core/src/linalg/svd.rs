//! Dense singular value decompositions.
//!
//! [`exact_svd`] reduces the matrix to a square triangular factor with a
//! Householder QR and then runs one-sided Jacobi rotations on it. [`rsvd`]
//! builds a Gaussian range sketch, sharpens it with power iterations
//! (re-orthonormalized by QR after every product) and finishes with an exact
//! SVD of the small projected matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;

/// Thin SVD `A ≈ U · diag(S) · Vᵀ` with `S` sorted nonincreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    /// M×K left singular vectors.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// N×K right singular vectors.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, &sj) in self.s.iter().enumerate() {
                let v = us.get(i, j) * sj;
                us.set(i, j, v);
            }
        }
        us.matmul_t(&self.v).expect("factor shapes agree")
    }

    pub fn truncate(mut self, k: usize) -> Self {
        if k < self.s.len() {
            self.u = self.u.leading_columns(k);
            self.v = self.v.leading_columns(k);
            self.s.truncate(k);
        }
        self
    }
}

fn to_columns(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.cols()).map(|j| a.column(j)).collect()
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Householder QR of a tall matrix given by its columns (`m ≥ n`).
/// Returns the thin orthonormal factor as columns and `R` (n×n, row-major).
pub(crate) fn householder_qr(mut cols: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Matrix) {
    let n = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    debug_assert!(m >= n);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = Matrix::zeros(n, n);

    for k in 0..n {
        let x = &cols[k][k..];
        let xnorm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm > 0.0 && xnorm > 0.0 {
            v.iter_mut().for_each(|e| *e /= vnorm);
            for col in cols.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let proj = 2.0 * dot(&v, tail);
                axpy(-proj, &v, tail);
            }
        } else {
            v.iter_mut().for_each(|e| *e = 0.0);
        }
        for (j, col) in cols.iter().enumerate().skip(k) {
            r.set(k, j, col[k]);
        }
        reflectors.push(v);
    }

    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for qc in q.iter_mut() {
        for k in (0..n).rev() {
            let v = &reflectors[k];
            let tail = &mut qc[k..];
            let proj = 2.0 * dot(v, tail);
            if proj != 0.0 {
                axpy(-proj, v, tail);
            }
        }
    }
    (q, r)
}

/// Orthonormal basis (columns) of the column space of a tall matrix.
pub(crate) fn orthonormalize(a: &Matrix) -> Vec<Vec<f64>> {
    householder_qr(to_columns(a)).0
}

/// One-sided Jacobi on a square matrix given by its columns.
/// Returns (W = A·V with orthogonal columns, V) as columns.
fn one_sided_jacobi(mut w: Vec<Vec<f64>>) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = w.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[p], &w[q]);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                norms[p] = dot(&w[p], &w[p]);
                norms[q] = dot(&w[q], &w[q]);
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::NonConvergence {
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Replaces the columns flagged in `degenerate` with unit vectors orthogonal
/// to every other column.
fn complete_basis(cols: &mut [Vec<f64>], degenerate: &[bool]) {
    let n = cols.first().map_or(0, Vec::len);
    let mut candidate = 0;
    for j in 0..cols.len() {
        if !degenerate[j] {
            continue;
        }
        loop {
            assert!(candidate < n, "basis completion ran out of candidates");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == j || (degenerate[k] && k > j) {
                        continue;
                    }
                    let proj = dot(other, &e);
                    axpy(-proj, other, &mut e);
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[j] = e;
                break;
            }
        }
    }
}

fn svd_tall(a: &Matrix) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let (q, r) = householder_qr(to_columns(a));
    let (w, v) = one_sided_jacobi(to_columns(&r))?;

    let sigma: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let smax = order.first().map_or(0.0, |&i| sigma[i]);
    let cutoff = smax * 1e-13;
    let mut ur: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for &j in &order {
        let sj = sigma[j];
        let small = sj <= cutoff || sj == 0.0;
        ur.push(if small {
            vec![0.0; n]
        } else {
            w[j].iter().map(|x| x / sj).collect()
        });
        degenerate.push(small);
        vs.push(v[j].clone());
        s.push(sj);
    }
    if degenerate.iter().any(|&d| d) {
        complete_basis(&mut ur, &degenerate);
    }

    // U = Q · U_R
    let mut u = Matrix::zeros(m, n);
    for (k, qk) in q.iter().enumerate() {
        for (i, &qik) in qk.iter().enumerate() {
            if qik == 0.0 {
                continue;
            }
            let row = u.row_mut(i);
            for (j, urj) in ur.iter().enumerate() {
                row[j] += qik * urj[k];
            }
        }
    }
    Ok(SvdFactors {
        u,
        s,
        v: from_columns(n, &vs),
    })
}

/// Full thin SVD. Intended for matrices whose smaller dimension is modest
/// (test oracles and the projected matrix inside [`rsvd`]).
pub fn exact_svd(a: &Matrix) -> Result<SvdFactors> {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let f = svd_tall(&a.transpose())?;
        Ok(SvdFactors { u: f.v, s: f.s, v: f.u })
    }
}

/// Randomized truncated SVD returning the top `k` factors.
pub fn rsvd(a: &Matrix, k: usize, oversample: usize, power_iters: usize, seed: u64) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let min_dim = m.min(n);
    if k == 0 || k > min_dim {
        return Err(Error::invalid(format!(
            "rsvd rank {k} must lie in 1..={min_dim} for a {m}x{n} matrix"
        )));
    }
    let l = (k + oversample).min(min_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Matrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(&a.matmul(&omega)?);
    for _ in 0..power_iters {
        let qm = from_columns(m, &q);
        let z = orthonormalize(&a.t_matmul(&qm)?);
        let zm = from_columns(n, &z);
        q = orthonormalize(&a.matmul(&zm)?);
    }
    let qm = from_columns(m, &q);
    let b = qm.t_matmul(a)?;
    let fb = exact_svd(&b)?;
    let u = qm.matmul(&fb.u)?;
    Ok(SvdFactors { u, s: fb.s, v: fb.v }.truncate(k))
}
