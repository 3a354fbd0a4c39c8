//! Covariance (Gram) matrices of moving-average processes on a time grid.
//!
//! Entries are computed by composite midpoint quadrature with the grid
//! times as quadrature knots, truncation of the infinite past at depth `L`,
//! geometric refinement against power-law singularities, and geometrically
//! growing panels over the far field. Each matrix records its quadrature
//! step, truncation depth, a bound on the truncated tail, the measured
//! step-halving delta, and the outcome of the PSD check.
//!
//! Two modes exist:
//!
//! * `Full` — `Σ_ij = ∫_{-L}^{min(t_i,t_j)} (f(s-t_i) - f(s)) (f(s-t_j) - f(s)) ds`,
//!   the covariance of the process with its whole Brownian history;
//! * `Fresh` — `Σ_ij = ∫_0^{min(t_i,t_j)} f(s-t_i) f(s-t_j) ds`, the
//!   covariance of `∫_0^u f(v-u) dB_v`, i.e. the law of the future given
//!   the past up to the additive history drift.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError};
use crate::kernel::{CounterexampleSpec, KernelError, MovingAverageKernel};
use crate::linalg;
use crate::quadrature::{integrate_segments, plan_segments};

#[derive(Debug, Error)]
pub enum CovarianceError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("hurst index must lie in (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("quadrature did not converge: step-halving delta {delta:e} above tolerance {tol:e} after {refinements} refinements")]
    NonConvergence { delta: f64, tol: f64, refinements: usize },
    #[error("truncation tail bound {tail:e} above configured cap {cap:e}; increase L")]
    TailAboveCap { tail: f64, cap: f64 },
    #[error("matrix asymmetry {diff:e} above relative tolerance {tol:e}")]
    NotSymmetric { diff: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: pivot {pivot:e} below threshold {threshold:e}")]
    NotPsd { pivot: f64, threshold: f64 },
    #[error("cannot normalize: Var(X_1) = {0:e} is degenerate")]
    DegenerateNormalization(f64),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    Full,
    Fresh,
}

/// Assembly options; `None` fields fall back to the documented defaults.
#[derive(Debug, Clone)]
pub struct GramOptions {
    pub mode: GramMode,
    /// Past-truncation depth. Default `max(100 T, kernel.truncation_hint())`.
    pub l: Option<f64>,
    /// Quadrature substep. Default `(min grid spacing) / 64`.
    pub quad_step: Option<f64>,
    /// Rescale so that Var(X_1) = 1.
    pub normalize: bool,
    /// Step-halving must change no entry by more than
    /// `convergence_tol * max(1, max diagonal)`.
    pub convergence_tol: f64,
    pub max_refinements: usize,
    /// Error out if the tail bound exceeds this cap.
    pub tail_cap: Option<f64>,
    /// PSD tolerance: pivots below `-psd_tol * max diagonal` are an error.
    pub psd_tol: f64,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            mode: GramMode::Full,
            l: None,
            quad_step: None,
            normalize: false,
            convergence_tol: 1e-6,
            max_refinements: 3,
            tail_cap: None,
            psd_tol: 1e-8,
        }
    }
}

impl GramOptions {
    pub fn fresh() -> Self {
        Self { mode: GramMode::Fresh, ..Self::default() }
    }

    pub fn normalized() -> Self {
        Self { normalize: true, ..Self::default() }
    }
}

/// Outcome of the PSD check run at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdReport {
    /// Most negative raw pivot of the LDL^T sweep (0 when clean).
    pub min_raw_pivot: f64,
    /// Pivots clamped to zero (recorded, never silent).
    pub clamped: usize,
    pub rank: usize,
    pub max_diag: f64,
}

/// How the matrix was produced; recorded in metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum GramSource {
    Quadrature { mode: GramMode },
    ClosedForm { label: String },
    Counterexample { corrected_sign: bool, n_max: usize },
    Conditioned,
    Imported,
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    grid: Grid,
    sigma: DMatrix<f64>,
    pub quad_step: f64,
    pub l: f64,
    pub tail_error: f64,
    pub source: GramSource,
    pub normalized: bool,
    /// Largest entry change observed at the final step halving.
    pub convergence_delta: f64,
    pub psd: PsdReport,
}

const SYMMETRY_TOL: f64 = 1e-12;
const LDLT_CLAMP_REL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

impl GramMatrix {
    /// Wraps a dense symmetric matrix: checks symmetry, symmetrizes
    /// exactly, and runs the PSD pivot check.
    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        grid: Grid,
        mut sigma: DMatrix<f64>,
        source: GramSource,
        quad_step: f64,
        l: f64,
        tail_error: f64,
        normalized: bool,
        convergence_delta: f64,
        psd_tol: f64,
    ) -> Result<Self, CovarianceError> {
        let n = grid.len();
        assert_eq!(sigma.nrows(), n);
        assert_eq!(sigma.ncols(), n);
        let scale = sigma.abs().max().max(f64::MIN_POSITIVE);
        let mut max_asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                max_asym = max_asym.max((sigma[(i, j)] - sigma[(j, i)]).abs());
            }
        }
        if max_asym > SYMMETRY_TOL * scale {
            return Err(CovarianceError::NotSymmetric { diff: max_asym / scale, tol: SYMMETRY_TOL });
        }
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        let sweep = linalg::ldlt_conditional_pivots(&sigma, LDLT_CLAMP_REL, RANK_TOL);
        let max_diag = linalg::max_diag(&sigma);
        if sweep.min_raw_pivot < -psd_tol * max_diag {
            return Err(CovarianceError::NotPsd {
                pivot: sweep.min_raw_pivot,
                threshold: -psd_tol * max_diag,
            });
        }
        let psd = PsdReport {
            min_raw_pivot: sweep.min_raw_pivot,
            clamped: sweep.clamped,
            rank: sweep.rank,
            max_diag,
        };
        Ok(Self {
            grid,
            sigma,
            quad_step,
            l,
            tail_error,
            source,
            normalized,
            convergence_delta,
            psd,
        })
    }

    /// Exact FBM Gram from the closed form (unit variance at t = 1).
    pub fn fbm_closed(grid: &Grid, hurst: f64) -> Result<Self, CovarianceError> {
        let times = grid.times();
        let n = times.len();
        let mut sigma = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = fbm_cov_closed(times[i], times[j], hurst)?;
                sigma[(i, j)] = v;
                sigma[(j, i)] = v;
            }
        }
        Self::from_dense(
            grid.clone(),
            sigma,
            GramSource::ClosedForm { label: format!("fbm_h{hurst}") },
            0.0,
            0.0,
            0.0,
            true,
            0.0,
            1e-8,
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }

    pub fn var(&self, i: usize) -> f64 {
        self.sigma[(i, i)]
    }

    /// Variance of the increment `X_{t_n} - X_{t_{n-1}}`, `n >= 1`.
    pub fn increment_variance(&self, n: usize) -> f64 {
        self.sigma[(n, n)] + self.sigma[(n - 1, n - 1)] - 2.0 * self.sigma[(n, n - 1)]
    }

    /// Gram of the vector `(X_{t_0}, D_1, ..., D_N)` with `D_n` the n-th
    /// increment.
    pub fn increment_gram(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut t = DMatrix::zeros(n, n);
        t[(0, 0)] = 1.0;
        for i in 1..n {
            t[(i, i)] = 1.0;
            t[(i, i - 1)] = -1.0;
        }
        &t * &self.sigma * t.transpose()
    }
}

/// Closed-form FBM covariance `(t^{2H} + u^{2H} - |t-u|^{2H}) / 2`,
/// normalized to unit variance at t = 1.
pub fn fbm_cov_closed(t: f64, u: f64, hurst: f64) -> Result<f64, CovarianceError> {
    if !(hurst.is_finite() && hurst > 0.0 && hurst < 1.0) {
        return Err(CovarianceError::InvalidHurst(hurst));
    }
    if !(t.is_finite() && u.is_finite()) || t < 0.0 || u < 0.0 {
        return Err(CovarianceError::Kernel(KernelError::InvalidTime(if t.is_finite() { u } else { t })));
    }
    let h2 = 2.0 * hurst;
    Ok(0.5 * (t.powf(h2) + u.powf(h2) - (t - u).abs().powf(h2)))
}

struct EntryPlan<'a> {
    kernel: &'a MovingAverageKernel,
    grid_times: &'a [f64],
    l: f64,
    step: f64,
    mode: GramMode,
    far_start: f64,
    features: Vec<f64>,
    singular_base: Vec<f64>,
}

impl<'a> EntryPlan<'a> {
    fn new(kernel: &'a MovingAverageKernel, grid_times: &'a [f64], l: f64, step: f64, mode: GramMode) -> Self {
        let t_max = *grid_times.last().unwrap();
        Self {
            kernel,
            grid_times,
            l,
            step,
            mode,
            far_start: t_max.max(1.0),
            features: kernel.feature_points(),
            singular_base: kernel.singular_points(),
        }
    }

    fn entry(&self, ti: f64, tj: f64) -> f64 {
        let upper = ti.min(tj);
        let lower = match self.mode {
            GramMode::Fresh => 0.0,
            GramMode::Full => {
                let support = self.kernel.support_lower().unwrap_or(f64::NEG_INFINITY);
                (-self.l).max(support)
            }
        };
        if upper <= lower {
            return 0.0;
        }

        let mut knots: Vec<f64> = Vec::new();
        for &t in self.grid_times {
            if t > lower && t < upper {
                knots.push(t);
            }
        }
        if matches!(self.mode, GramMode::Full) {
            knots.push(0.0);
        }
        for &x in &self.features {
            for shift in [0.0, ti, tj] {
                let p = x + shift;
                if p > lower && p < upper {
                    knots.push(p);
                }
            }
        }
        let mut singular: Vec<f64> = Vec::new();
        for &x in &self.singular_base {
            for shift in [0.0, ti, tj] {
                let p = x + shift;
                if p >= lower && p <= upper {
                    singular.push(p);
                }
            }
        }

        let segs = plan_segments(lower, upper, &knots, &singular, self.step, self.far_start);
        match self.mode {
            GramMode::Full => integrate_segments(
                &|s| self.kernel.increment_unchecked(ti, s) * self.kernel.increment_unchecked(tj, s),
                &segs,
            ),
            GramMode::Fresh => integrate_segments(
                &|s| self.kernel.eval_unchecked(s - ti) * self.kernel.eval_unchecked(s - tj),
                &segs,
            ),
        }
    }
}

fn assemble(plan: &EntryPlan, times: &[f64]) -> DMatrix<f64> {
    let n = times.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let values = map_pairs(&pairs, |&(i, j)| plan.entry(times[i], times[j]));
    let mut sigma = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        sigma[(i, j)] = v;
        sigma[(j, i)] = v;
    }
    sigma
}

#[cfg(not(target_arch = "wasm32"))]
fn map_pairs<T: Sync, F: Sync + Fn(&T) -> f64>(items: &[T], f: F) -> Vec<f64> {
    use rayon::prelude::*;
    items.par_iter().map(&f).collect()
}

#[cfg(target_arch = "wasm32")]
fn map_pairs<T, F: Fn(&T) -> f64>(items: &[T], f: F) -> Vec<f64> {
    items.iter().map(|it| f(it)).collect()
}

/// Covariance matrix of the process induced by `kernel` on `grid`.
///
/// The quadrature step is halved until no entry moves by more than the
/// convergence tolerance; the result carries the measured delta, the
/// truncation tail bound, and the PSD report.
pub fn gram(
    kernel: &MovingAverageKernel,
    grid: &Grid,
    opts: &GramOptions,
) -> Result<GramMatrix, CovarianceError> {
    let times = grid.times();
    let t_max = grid.t_max();
    let l = match opts.l {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(CovarianceError::InvalidOption(format!("l must be positive, got {l}"))),
        None => (100.0 * t_max).max(kernel.truncation_hint()),
    };
    let step0 = match opts.quad_step {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(CovarianceError::InvalidOption(format!("quad_step must be positive, got {s}")))
        }
        None => grid.min_spacing() / 64.0,
    };

    let tail_error = match opts.mode {
        GramMode::Fresh => 0.0,
        GramMode::Full => {
            let mut worst: f64 = 0.0;
            for &t in times {
                worst = worst.max(kernel.tail_bound(t, l)?);
            }
            worst
        }
    };
    if let Some(cap) = opts.tail_cap {
        if tail_error > cap {
            return Err(CovarianceError::TailAboveCap { tail: tail_error, cap });
        }
    }

    let mut step = step0;
    let mut prev = assemble(&EntryPlan::new(kernel, times, l, step, opts.mode), times);
    let mut converged = None;
    for _ in 0..opts.max_refinements {
        step *= 0.5;
        let next = assemble(&EntryPlan::new(kernel, times, l, step, opts.mode), times);
        let delta = (&next - &prev).abs().max();
        let tol = opts.convergence_tol * linalg::max_diag(&next).max(1.0);
        prev = next;
        if delta <= tol {
            converged = Some(delta);
            break;
        }
    }
    let Some(delta) = converged else {
        let tol = opts.convergence_tol * linalg::max_diag(&prev).max(1.0);
        return Err(CovarianceError::NonConvergence {
            delta: f64::NAN,
            tol,
            refinements: opts.max_refinements,
        });
    };
    let mut sigma = prev;

    let mut tail = tail_error;
    if opts.normalize {
        let plan = EntryPlan::new(kernel, times, l, step, opts.mode);
        let var1 = plan.entry(1.0, 1.0);
        if !(var1.is_finite() && var1 > 0.0) {
            return Err(CovarianceError::DegenerateNormalization(var1));
        }
        sigma /= var1;
        tail /= var1;
    }

    GramMatrix::from_dense(
        grid.clone(),
        sigma,
        GramSource::Quadrature { mode: opts.mode },
        step,
        l,
        tail,
        opts.normalize,
        delta,
        opts.psd_tol,
    )
}

/// Gram matrix of the dyadic counterexample process.
///
/// Component kernels have disjoint driver supports, so the covariance is a
/// termwise sum of band integrals; on each band the integrand is piecewise
/// quadratic in `v` and the integral is evaluated in closed form (the same
/// value midpoint quadrature converges to, without its step error).
pub fn counterexample_gram(spec: &CounterexampleSpec, grid: &Grid) -> Result<GramMatrix, CovarianceError> {
    let times = grid.times();
    if grid.t_max() > 1.0 {
        return Err(CovarianceError::InvalidOption(
            "counterexample process lives on [0, 1]; grid exceeds 1".into(),
        ));
    }
    let n = times.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let values = map_pairs(&pairs, |&(i, j)| counterexample_entry(spec, times[i], times[j]));
    let mut sigma = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        sigma[(i, j)] = v;
        sigma[(j, i)] = v;
    }
    GramMatrix::from_dense(
        grid.clone(),
        sigma,
        GramSource::Counterexample { corrected_sign: spec.corrected_sign, n_max: spec.n_max },
        0.0,
        1.0,
        0.0,
        false,
        0.0,
        1e-8,
    )
}

fn counterexample_entry(spec: &CounterexampleSpec, ti: f64, tj: f64) -> f64 {
    // ∫_p^q (1 - v) dv
    fn jint(p: f64, q: f64) -> f64 {
        if q <= p {
            0.0
        } else {
            (q - p) * (1.0 - 0.5 * (p + q))
        }
    }
    // ∫_p^q (1 - v)^2 dv
    fn kint(p: f64, q: f64) -> f64 {
        let a = 1.0 - p;
        let b = 1.0 - q;
        (a * a * a - b * b * b) / 3.0
    }

    let sigma_sign = if spec.corrected_sign { 1.0 } else { -1.0 };
    let mut total = 0.0;
    for nn in 0..spec.n_max {
        let an = CounterexampleSpec::a(nn);
        let an1 = CounterexampleSpec::a(nn + 1);
        let b = spec.b(nn);
        let coeff = (2.0f64).powi(2 * nn as i32 + 3);
        let di = sigma_sign * coeff * (ti - an1).max(0.0);
        let dj = sigma_sign * coeff * (tj - an1).max(0.0);
        let step_overlap = (ti.min(tj).min(an1) - an).max(0.0);
        let mi = ti.clamp(an, an1);
        let mj = tj.clamp(an, an1);
        let band = step_overlap - dj * jint(an, mi) - di * jint(an, mj) + di * dj * kint(an, an1);
        total += b * b * band;
    }
    total
}

/// Midpoint-quadrature version of a counterexample Gram entry; used to
/// cross-check the closed-form assembly.
pub fn counterexample_entry_quadrature(
    spec: &CounterexampleSpec,
    ti: f64,
    tj: f64,
    quad_step: f64,
) -> f64 {
    let mut total = 0.0;
    for nn in 0..spec.n_max {
        let an = CounterexampleSpec::a(nn);
        let an1 = CounterexampleSpec::a(nn + 1);
        let knots: Vec<f64> = [ti, tj].iter().copied().filter(|&t| t > an && t < an1).collect();
        let segs = plan_segments(an, an1, &knots, &[], quad_step, f64::INFINITY);
        total += integrate_segments(
            &|v| {
                spec.component_kernel_unchecked(nn, ti, v) * spec.component_kernel_unchecked(nn, tj, v)
            },
            &segs,
        );
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::kernel::BWeightRule;

    fn bm_grid() -> Grid {
        Grid::new(vec![0.25, 0.5, 1.0]).unwrap()
    }

    #[test]
    fn brownian_gram_is_min_in_both_modes() {
        let bm = MovingAverageKernel::brownian();
        let grid = bm_grid();
        for opts in [GramOptions::default(), GramOptions::fresh()] {
            let g = gram(&bm, &grid, &opts).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = grid.times()[i].min(grid.times()[j]);
                    assert_abs_diff_eq!(g.entry(i, j), expect, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn indicator_gram_is_twice_min_on_unit_interval() {
        // fresh part contributes min(t, u); the history overlap contributes
        // another min(t, u); cross terms vanish
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        let grid = Grid::new(vec![0.2, 0.45, 0.8, 1.0]).unwrap();
        let g = gram(&ind, &grid, &GramOptions::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = 2.0 * grid.times()[i].min(grid.times()[j]);
                assert_abs_diff_eq!(g.entry(i, j), expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fbm_closed_form_hand_values() {
        assert_abs_diff_eq!(fbm_cov_closed(1.0, 2.0, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fbm_cov_closed(1.0, 1.0, 0.3).unwrap(), 1.0, epsilon = 1e-15);
        // H = 0.75: (1 + 2^1.5 - 1) / 2 = sqrt 2
        assert_abs_diff_eq!(
            fbm_cov_closed(1.0, 2.0, 0.75).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-14
        );
        assert!(fbm_cov_closed(1.0, 1.0, 1.2).is_err());
    }

    #[test]
    fn normalized_fbm_gram_matches_closed_form() {
        let grid = Grid::new(vec![0.25, 0.5, 0.75, 1.0, 1.375]).unwrap();
        for &h in &[0.25, 0.5, 0.75] {
            let k = MovingAverageKernel::fbm(h).unwrap();
            let g = gram(&k, &grid, &GramOptions::normalized()).unwrap();
            for i in 0..grid.len() {
                for j in 0..=i {
                    let expect = fbm_cov_closed(grid.times()[i], grid.times()[j], h).unwrap();
                    let err = (g.entry(i, j) - expect).abs();
                    assert!(
                        err <= 1e-3 * expect.abs().max(1e-12),
                        "H={h} entry ({i},{j}): got {}, closed {expect}, err {err:e}",
                        g.entry(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn normalization_fixes_unit_variance_at_one() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = Grid::new(vec![0.5, 1.0]).unwrap();
        let g = gram(&k, &grid, &GramOptions::normalized()).unwrap();
        assert_abs_diff_eq!(g.entry(1, 1), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn fresh_mode_is_independent_of_l() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = bm_grid();
        let o1 = GramOptions { l: Some(5.0), ..GramOptions::fresh() };
        let o2 = GramOptions { l: Some(500.0), ..GramOptions::fresh() };
        let g1 = gram(&k, &grid, &o1).unwrap();
        let g2 = gram(&k, &grid, &o2).unwrap();
        assert_eq!(g1.sigma(), g2.sigma());
    }

    #[test]
    fn doubling_l_changes_entries_by_less_than_tail_error() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = bm_grid();
        let o1 = GramOptions { l: Some(200.0), ..GramOptions::default() };
        let o2 = GramOptions { l: Some(400.0), ..GramOptions::default() };
        let g1 = gram(&k, &grid, &o1).unwrap();
        let g2 = gram(&k, &grid, &o2).unwrap();
        let diff = (g1.sigma() - g2.sigma()).abs().max();
        assert!(diff <= g1.tail_error, "diff {diff:e} vs tail {:e}", g1.tail_error);
        assert!(g1.tail_error > 0.0);
    }

    #[test]
    fn tail_cap_is_enforced() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = bm_grid();
        let opts = GramOptions { l: Some(10.0), tail_cap: Some(1e-12), ..GramOptions::default() };
        assert!(matches!(
            gram(&k, &grid, &opts),
            Err(CovarianceError::TailAboveCap { .. })
        ));
    }

    #[test]
    fn fresh_gram_var_at_zero_is_exactly_zero() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = Grid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let g = gram(&k, &grid, &GramOptions::fresh()).unwrap();
        assert_eq!(g.var(0), 0.0);
    }

    #[test]
    fn counterexample_var_hand_values() {
        // only the Brownian segment of component 0 is active before a_1
        let spec =
            CounterexampleSpec::new(1, BWeightRule::Constant { value: 1.0 }, true).unwrap();
        let grid = Grid::new(vec![0.25]).unwrap();
        let g = counterexample_gram(&spec, &grid).unwrap();
        assert_abs_diff_eq!(g.var(0), 0.25, epsilon = 1e-14);

        // empty integration range at t = 0
        let spec = CounterexampleSpec::default();
        let grid = Grid::new(vec![0.0, 1.0]).unwrap();
        let g = counterexample_gram(&spec, &grid).unwrap();
        assert_eq!(g.var(0), 0.0);

        // geometric series oracle: Var(X_1) = (13/6) sum_{n<12} 8^{-n}
        let expect = (13.0 / 6.0) * (1.0 - (0.125f64).powi(12)) / (1.0 - 0.125);
        assert_abs_diff_eq!(g.var(1), expect, epsilon = 1e-12);
    }

    #[test]
    fn counterexample_closed_form_matches_quadrature() {
        let spec = CounterexampleSpec::default();
        for &(ti, tj) in &[(0.3, 0.3), (0.3, 0.9), (0.96, 0.97), (1.0, 0.5), (1.0, 1.0)] {
            let exact = counterexample_entry(&spec, ti, tj);
            let quad = counterexample_entry_quadrature(&spec, ti, tj, 1e-4);
            assert_abs_diff_eq!(exact, quad, epsilon = 1e-7);
        }
        let unc = CounterexampleSpec::new(6, BWeightRule::Pow2, false).unwrap();
        let exact = counterexample_entry(&unc, 0.8, 1.0);
        let quad = counterexample_entry_quadrature(&unc, 0.8, 1.0, 1e-4);
        assert_abs_diff_eq!(exact, quad, epsilon = 1e-6);
    }

    #[test]
    fn halving_the_step_changes_entries_within_reported_delta() {
        let k = MovingAverageKernel::fbm(0.3).unwrap();
        let grid = Grid::new(vec![0.5, 1.0]).unwrap();
        let g = gram(&k, &grid, &GramOptions::default()).unwrap();
        // re-assemble at half the achieved step and compare
        let plan = EntryPlan::new(&k, grid.times(), g.l, g.quad_step * 0.5, GramMode::Full);
        let finer = assemble(&plan, grid.times());
        let diff = (&finer - g.sigma()).abs().max();
        let tol = 1e-6 * linalg::max_diag(g.sigma()).max(1.0);
        assert!(diff <= tol, "diff {diff:e} vs tol {tol:e}");
    }

    #[test]
    fn from_dense_rejects_asymmetry_and_indefiniteness() {
        let grid = Grid::new(vec![0.5, 1.0]).unwrap();
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            GramMatrix::from_dense(grid.clone(), asym, GramSource::Imported, 0.0, 0.0, 0.0, false, 0.0, 1e-8),
            Err(CovarianceError::NotSymmetric { .. })
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GramMatrix::from_dense(grid, indef, GramSource::Imported, 0.0, 0.0, 0.0, false, 0.0, 1e-8),
            Err(CovarianceError::NotPsd { .. })
        ));
    }

    #[test]
    fn increment_gram_matches_hand_differencing() {
        let grid = Grid::new(vec![0.25, 0.5, 1.0]).unwrap();
        let g = GramMatrix::fbm_closed(&grid, 0.5).unwrap();
        let inc = g.increment_gram();
        // BM: X_{t0} and independent increments on the diagonal
        assert_abs_diff_eq!(inc[(0, 0)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(inc[(1, 1)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(inc[(2, 2)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(inc[(1, 0)], 0.0, epsilon = 1e-12);
    }
}
