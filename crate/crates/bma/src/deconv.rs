//! Causal Volterra convolution and its regularized inversion.
//!
//! The continuous operator is `(h * g)(t) = ∫_0^t h(s - t) g(s) ds` for
//! `h` on `[-T, 0]` and `g` on `[0, T]`. Discretized by a left-Riemann sum
//! with step `delta` it becomes a strictly lower-triangular matrix, which
//! preserves the causal structure exactly: if `h` vanishes on `[-eps, 0]`
//! then `h * g` vanishes identically on `[0, eps)` for every `g` — the
//! support edges add (the discrete shadow of the Titchmarsh convolution
//! theorem). Conversely, when `h` is nonzero arbitrarily close to 0, the
//! image of the operator approximates every continuous target with
//! `phi(0) = 0` as the step and the regularization go to zero.
//!
//! Vector conventions: `h[j] = h(-j delta)` (depth-indexed into the past)
//! and `g[j] = g(j delta)`, both of length `N + 1` on a common step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeconvError {
    #[error("grid mismatch: h has {0} samples, the other vector has {1}")]
    GridMismatch(usize, usize),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("target must start at zero: phi(0) = {0:e}")]
    PhiNotAnchored(f64),
    #[error("kernel h is identically zero")]
    ZeroKernel,
    #[error("triangular system is singular at lambda = 0 (h vanishes at depth delta); use lambda > 0")]
    SingularAtZeroLambda,
    #[error("regularization weight must be nonnegative and finite, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations failed to factor at lambda = {0:e}")]
    NormalEquations(f64),
}

/// Discrete Volterra convolution: `out[i] = delta * Σ_{j < i} h[i-j] g[j]`.
///
/// The matrix acting on `g` is strictly lower triangular; `out[0] = 0`
/// always, and leading zeros of `h` produce exact structural zeros of the
/// output regardless of `g`.
pub fn conv_apply(h: &[f64], g: &[f64], delta: f64) -> Result<Vec<f64>, DeconvError> {
    if h.len() != g.len() {
        return Err(DeconvError::GridMismatch(h.len(), g.len()));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(DeconvError::InvalidStep(delta));
    }
    let n = h.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = 0.0;
        for j in 0..i {
            acc += h[i - j] * g[j];
        }
        out[i] = delta * acc;
    }
    Ok(out)
}

/// Largest depth `eps` such that `|samples| <= tol` on `[0, eps]` from the
/// leading end, at grid resolution. A zero vector reports the full
/// interval length.
pub fn edge_of_support(samples: &[f64], delta: f64, tol: Option<f64>) -> f64 {
    let scale = samples.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = tol.unwrap_or(1e-12 * scale);
    let full = (samples.len().saturating_sub(1)) as f64 * delta;
    let mut m = 0usize;
    for &s in samples {
        if s.abs() <= tol {
            m += 1;
        } else {
            break;
        }
    }
    (m as f64 * delta).min(full)
}

#[derive(Debug, Clone, Serialize)]
pub struct DeconvResult {
    pub g: Vec<f64>,
    /// `h * g` on the grid.
    pub conv: Vec<f64>,
    /// `max_i |(h*g)(t_i) - phi(t_i)|`.
    pub sup_error: f64,
    /// `sqrt(delta * Σ ((h*g) - phi)^2)`.
    pub l2_error: f64,
    pub lambda: f64,
    /// Detected vanishing depth of `h` near 0.
    pub edge_h: f64,
    pub delta: f64,
}

/// Solves `min_g ||h*g - phi||_2^2 + lambda ||g||_2^2` on the grid.
///
/// `lambda = 0` runs exact forward substitution on the triangular system
/// (requires `h` nonzero at depth `delta`); the final sample `g[N]`, which
/// the strictly triangular operator never sees, is extended from its
/// neighbor. `lambda > 0` solves the normal equations.
pub fn deconv_solve(h: &[f64], phi: &[f64], delta: f64, lambda: f64) -> Result<DeconvResult, DeconvError> {
    if h.len() != phi.len() {
        return Err(DeconvError::GridMismatch(h.len(), phi.len()));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(DeconvError::InvalidStep(delta));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(DeconvError::InvalidLambda(lambda));
    }
    let n = h.len();
    let hmax = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if hmax == 0.0 {
        return Err(DeconvError::ZeroKernel);
    }
    let phimax = phi.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if phi[0].abs() > 1e-12 * phimax.max(1.0) {
        return Err(DeconvError::PhiNotAnchored(phi[0]));
    }

    let g = if lambda == 0.0 {
        if n < 2 || h[1].abs() <= 1e-12 * hmax {
            return Err(DeconvError::SingularAtZeroLambda);
        }
        let mut g = vec![0.0; n];
        for i in 1..n {
            let mut acc = 0.0;
            for j in 0..i - 1 {
                acc += h[i - j] * g[j];
            }
            g[i - 1] = (phi[i] / delta - acc) / h[1];
        }
        g[n - 1] = g[n - 2];
        g
    } else {
        // normal equations (A^T A + lambda I) g = A^T phi, A[i][j] = delta h[i-j]
        let d2 = delta * delta;
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..=j {
                let mut acc = 0.0;
                for i in j + 1..n {
                    acc += h[i - j] * h[i - k];
                }
                let v = d2 * acc;
                m[(j, k)] += v;
                m[(k, j)] += if j == k { 0.0 } else { v };
            }
            m[(j, j)] += lambda;
        }
        let mut rhs = DVector::zeros(n);
        for j in 0..n {
            let mut acc = 0.0;
            for i in j + 1..n {
                acc += h[i - j] * phi[i];
            }
            rhs[j] = delta * acc;
        }
        let chol = m.cholesky().ok_or(DeconvError::NormalEquations(lambda))?;
        chol.solve(&rhs).iter().copied().collect()
    };

    let conv = conv_apply(h, &g, delta)?;
    let mut sup = 0.0f64;
    let mut l2 = 0.0f64;
    for (c, p) in conv.iter().zip(phi) {
        let e = c - p;
        sup = sup.max(e.abs());
        l2 += e * e;
    }
    Ok(DeconvResult {
        edge_h: edge_of_support(h, delta, None),
        g,
        conv,
        sup_error: sup,
        l2_error: (delta * l2).sqrt(),
        lambda,
        delta,
    })
}

/// The fixed regularization ladder: `1e-2 .. 1e-10` by decades, then 0.
pub const LAMBDA_LADDER: [f64; 10] =
    [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 0.0];

/// Runs the ladder and returns the best result by sup error, plus the
/// `(lambda, sup_error)` table of every solvable rung. Rungs that fail
/// structurally (singular triangular system at 0) are skipped.
pub fn deconv_solve_ladder(
    h: &[f64],
    phi: &[f64],
    delta: f64,
    lambdas: &[f64],
) -> Result<(DeconvResult, Vec<(f64, f64)>), DeconvError> {
    let mut best: Option<DeconvResult> = None;
    let mut table = Vec::new();
    let mut last_err = None;
    for &lam in lambdas {
        match deconv_solve(h, phi, delta, lam) {
            Ok(r) => {
                table.push((lam, r.sup_error));
                if best.as_ref().is_none_or(|b| r.sup_error < b.sup_error) {
                    best = Some(r);
                }
            }
            Err(e @ DeconvError::SingularAtZeroLambda) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(b) => Ok((b, table)),
        None => Err(last_err.unwrap_or(DeconvError::ZeroKernel)),
    }
}
