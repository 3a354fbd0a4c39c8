//! Dense symmetric linear algebra used across the crate: an unpivoted LDL^T
//! sweep (successive Schur-complement pivots), a rank-revealing pivoted
//! Cholesky for PSD matrices, eigen-based pseudo-inverses for small blocks,
//! and a shifted inverse block iteration for the lowest eigenpairs of large
//! matrices.

use nalgebra::{DMatrix, DVector};

use crate::rng;

/// Largest diagonal entry; the natural scale of a PSD matrix.
pub fn max_diag(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).fold(0.0f64, f64::max)
}

pub struct LdltSweep {
    /// Pivots in grid order; each is the variance of coordinate `k` given
    /// coordinates `0..k`, clamped to zero below the tolerance.
    pub pivots: Vec<f64>,
    /// Most negative raw pivot encountered (0 if none were negative).
    pub min_raw_pivot: f64,
    /// Number of pivots clamped to zero.
    pub clamped: usize,
    /// Count of pivots above `rank_tol * max_pivot`.
    pub rank: usize,
}

/// Unpivoted LDL^T with zero-clamping of tiny pivots.
///
/// For a PSD matrix the `k`-th pivot equals
/// `Var(X_k | X_0, ..., X_{k-1})` with pseudo-inversion on degenerate
/// leading blocks: when a pivot is (numerically) zero the whole column of
/// the current Schur complement must vanish, and it is zeroed out.
pub fn ldlt_conditional_pivots(m: &DMatrix<f64>, clamp_tol_rel: f64, rank_tol_rel: f64) -> LdltSweep {
    let n = m.nrows();
    let scale = max_diag(m).max(f64::MIN_POSITIVE);
    let clamp_abs = clamp_tol_rel * scale;
    let mut w = m.clone_owned();
    let data = w.as_mut_slice(); // column-major
    let mut pivots = vec![0.0; n];
    let mut min_raw: f64 = 0.0;
    let mut clamped = 0usize;
    let mut col_k = vec![0.0; n];
    for k in 0..n {
        let d = data[k * n + k];
        min_raw = min_raw.min(d);
        if d <= clamp_abs {
            pivots[k] = 0.0;
            clamped += 1;
            continue;
        }
        pivots[k] = d;
        col_k[k + 1..n].copy_from_slice(&data[k * n + k + 1..k * n + n]);
        let inv_d = 1.0 / d;
        // rank-1 downdate of the trailing lower triangle, column by column
        for j in k + 1..n {
            let ljk = col_k[j] * inv_d;
            if ljk == 0.0 {
                continue;
            }
            let col_j = &mut data[j * n + j..j * n + n];
            for (x, &c) in col_j.iter_mut().zip(&col_k[j..n]) {
                *x -= ljk * c;
            }
        }
    }
    let max_pivot = pivots.iter().fold(0.0f64, |a, &b| a.max(b));
    let rank = pivots.iter().filter(|&&p| p > rank_tol_rel * max_pivot).count();
    LdltSweep { pivots, min_raw_pivot: min_raw, clamped, rank }
}

#[derive(Debug)]
pub struct NotPsd {
    pub pivot: f64,
    pub threshold: f64,
}

/// Rank-revealing factor of a PSD matrix: `sigma = B B^T` with `B` of shape
/// `n x rank`, rows in original coordinate order.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    n: usize,
    rank: usize,
    /// Column-major `n x rank`.
    b: Vec<f64>,
    /// Pivot order (original indices).
    pub pivot_order: Vec<usize>,
    pub max_pivot: f64,
}

impl PsdFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.b[k * self.n + i]
    }

    /// `x <- mean + B z` for `z` of length `rank`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rank);
        debug_assert_eq!(out.len(), self.n);
        out.fill(0.0);
        for (k, &zk) in z.iter().enumerate() {
            let col = &self.b[k * self.n..(k + 1) * self.n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * zk;
            }
        }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let b = DMatrix::from_column_slice(self.n, self.rank, &self.b);
        &b * b.transpose()
    }
}

/// Diagonally pivoted Cholesky for PSD matrices.
///
/// Stops when the largest remaining diagonal falls below
/// `rank_tol * first_pivot`; fails if any remaining diagonal is more
/// negative than `-psd_tol * max_diag`.
pub fn pivoted_cholesky(
    m: &DMatrix<f64>,
    rank_tol: f64,
    psd_tol: f64,
) -> Result<PsdFactor, NotPsd> {
    let n = m.nrows();
    let scale = max_diag(m);
    let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    // per-row factor entries, contiguous for the dot products
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut order = Vec::new();
    let mut active: Vec<usize> = (0..n).collect();
    let mut max_pivot = 0.0f64;

    while let Some((pos, &p)) = active
        .iter()
        .enumerate()
        .max_by(|a, b| d[*a.1].partial_cmp(&d[*b.1]).unwrap())
    {
        let pivot = d[p];
        if order.is_empty() {
            max_pivot = pivot.max(0.0);
        }
        if pivot <= rank_tol * max_pivot || pivot <= 0.0 {
            // rank exhausted; verify the remainder is PSD within tolerance
            for &j in &active {
                if d[j] < -psd_tol * scale {
                    return Err(NotPsd { pivot: d[j], threshold: -psd_tol * scale });
                }
            }
            break;
        }
        active.swap_remove(pos);
        let sq = pivot.sqrt();
        let prow = rows[p].clone();
        rows[p].push(sq);
        for &j in &active {
            let dot: f64 = rows[j].iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
            let l = (m[(j.max(p), j.min(p))] - dot) / sq;
            rows[j].push(l);
            d[j] -= l * l;
        }
        order.push(p);
        if order.len() == n {
            break;
        }
    }

    let rank = order.len();
    let mut b = vec![0.0; n * rank];
    for i in 0..n {
        for (k, &v) in rows[i].iter().enumerate() {
            b[k * n + i] = v;
        }
    }
    Ok(PsdFactor { n, rank, b, pivot_order: order, max_pivot })
}

/// Symmetric eigendecomposition, ascending eigenvalues.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = m.clone_owned().symmetric_eigen();
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition, cutting off eigenvalues below `tol_rel * lambda_max`.
pub fn pinv_psd(m: &DMatrix<f64>, tol_rel: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let lmax = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    let cut = tol_rel * lmax;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &val) in vals.iter().enumerate() {
        if val > cut {
            let v = vecs.column(k);
            out += v * v.transpose() / val;
        }
    }
    out
}

/// Lowest `k` eigenpairs of a large symmetric PSD matrix by shifted inverse
/// block iteration. Start vectors are deterministic, so results are
/// reproducible. Accuracy is iterative; small matrices in tests are
/// cross-checked against the full eigendecomposition.
pub fn smallest_eigenpairs(m: &DMatrix<f64>, k: usize, iters: usize) -> Vec<(f64, DVector<f64>)> {
    let n = m.nrows();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let scale = max_diag(m).max(f64::MIN_POSITIVE);
    let mut shift = 1e-8 * scale;
    let chol = loop {
        let shifted = m + DMatrix::identity(n, n) * shift;
        match shifted.cholesky() {
            Some(c) => break c,
            None => shift *= 16.0,
        }
    };

    let block = (k + 2).min(n);
    let mut v = DMatrix::from_fn(n, block, |i, j| rng::normal_at(0xB1A5_EDB0, j as u64, i as u64));
    orthonormalize(&mut v);
    for _ in 0..iters {
        for j in 0..block {
            let col = chol.solve(&v.column(j).clone_owned());
            v.set_column(j, &col);
        }
        orthonormalize(&mut v);
    }
    // Rayleigh quotients on the original matrix
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..block)
        .map(|j| {
            let x = v.column(j).clone_owned();
            let lam = (&x.transpose() * m * &x)[(0, 0)];
            (lam, x)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.truncate(k);
    pairs
}

fn orthonormalize(v: &mut DMatrix<f64>) {
    let cols = v.ncols();
    for j in 0..cols {
        for prev in 0..j {
            let proj = v.column(j).dot(&v.column(prev));
            let prev_col = v.column(prev).clone_owned();
            let mut col = v.column_mut(j);
            col.axpy(-proj, &prev_col, 1.0);
        }
        let norm = v.column(j).norm();
        if norm > 0.0 {
            v.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}
