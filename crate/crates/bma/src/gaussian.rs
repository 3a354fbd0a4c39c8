//! Gaussian linear algebra and path simulation.
//!
//! Two independent simulation routes exist on purpose:
//!
//! * [`sample`] draws exact Gaussian vectors through the rank-revealing
//!   factor of a Gram matrix (`x = mean + B z`);
//! * [`direct_simulate`] never touches the Gram matrix: it discretizes the
//!   defining stochastic integral as a Riemann sum over i.i.d. Brownian
//!   increments on a refined driver grid, with the kernel evaluated at
//!   substep midpoints.
//!
//! Agreement of the two empirical covariances validates both the quadrature
//! and the factorization. All randomness is counter-based per
//! `(seed, path, draw)`, so ensembles are reproducible bit-for-bit under any
//! thread count.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceError, GramMatrix, GramSource};
use crate::grid::{Grid, GridError};
use crate::kernel::{CounterexampleSpec, MovingAverageKernel};
use crate::linalg::{self, PsdFactor};
use crate::rng;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("matrix is not positive semidefinite: pivot {pivot:e} below {threshold:e}")]
    NotPsd { pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("observed indices must be distinct and in range: {0}")]
    BadObservation(String),
    #[error("observed values are inconsistent with a degenerate block: residual {residual:e} above tolerance {tol:e}")]
    InconsistentObservation { residual: f64, tol: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Mean vector plus Gram matrix on a grid.
#[derive(Debug, Clone)]
pub struct GaussianVector {
    mean: Vec<f64>,
    gram: GramMatrix,
}

impl GaussianVector {
    pub fn zero_mean(gram: GramMatrix) -> Self {
        let n = gram.n();
        Self { mean: vec![0.0; n], gram }
    }

    pub fn new(mean: Vec<f64>, gram: GramMatrix) -> Result<Self, GaussianError> {
        if mean.len() != gram.n() {
            return Err(GaussianError::Dimension(format!(
                "mean has {} entries, gram is {}x{}",
                mean.len(),
                gram.n(),
                gram.n()
            )));
        }
        if !mean.iter().all(|m| m.is_finite()) {
            return Err(GaussianError::Invalid("mean contains a non-finite entry".into()));
        }
        Ok(Self { mean, gram })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }
}

/// Default relative pivot tolerance for rank decisions. Matches the
/// pseudo-inverse cutoff so the two notions of rank agree.
pub const RANK_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const PINV_TOL: f64 = 1e-10;

/// Rank-revealing pivoted factorization `sigma = B B^T` of a Gram matrix.
pub fn factor_psd(gram: &GramMatrix) -> Result<PsdFactor, GaussianError> {
    linalg::pivoted_cholesky(gram.sigma(), RANK_TOL, PSD_TOL)
        .map_err(|e| GaussianError::NotPsd { pivot: e.pivot, threshold: e.threshold })
}

/// Conditional law of the unobserved coordinates given exact observations.
///
/// Uses the Schur complement with a pseudo-inverse on the observed block,
/// so rank-deficient observations are allowed; the observed values must
/// then lie in the block's affine support within tolerance.
pub fn condition(
    gv: &GaussianVector,
    observed: &[usize],
    values: &[f64],
) -> Result<GaussianVector, GaussianError> {
    let n = gv.n();
    if observed.len() != values.len() {
        return Err(GaussianError::Dimension(format!(
            "{} indices vs {} values",
            observed.len(),
            values.len()
        )));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(GaussianError::Invalid("observed values must be finite".into()));
    }
    let mut seen = vec![false; n];
    for &i in observed {
        if i >= n {
            return Err(GaussianError::BadObservation(format!("index {i} out of range 0..{n}")));
        }
        if seen[i] {
            return Err(GaussianError::BadObservation(format!("index {i} repeated")));
        }
        seen[i] = true;
    }
    let unobs: Vec<usize> = (0..n).filter(|i| !seen[*i]).collect();
    if unobs.is_empty() {
        return Err(GaussianError::BadObservation("cannot observe every coordinate".into()));
    }

    let sigma = gv.gram().sigma();
    let no = observed.len();
    let nu = unobs.len();
    let mut s_oo = DMatrix::zeros(no, no);
    for (a, &i) in observed.iter().enumerate() {
        for (b, &j) in observed.iter().enumerate() {
            s_oo[(a, b)] = sigma[(i, j)];
        }
    }
    let mut s_uo = DMatrix::zeros(nu, no);
    for (a, &i) in unobs.iter().enumerate() {
        for (b, &j) in observed.iter().enumerate() {
            s_uo[(a, b)] = sigma[(i, j)];
        }
    }
    let mut s_uu = DMatrix::zeros(nu, nu);
    for (a, &i) in unobs.iter().enumerate() {
        for (b, &j) in unobs.iter().enumerate() {
            s_uu[(a, b)] = sigma[(i, j)];
        }
    }

    let pinv = linalg::pinv_psd(&s_oo, PINV_TOL);
    let resid = DMatrix::from_fn(no, 1, |a, _| values[a] - gv.mean()[observed[a]]);

    // Degenerate directions of the observed block carry no freedom; the
    // residual must be reproduced by sigma_oo sigma_oo^+.
    let proj = &s_oo * (&pinv * &resid);
    let scale = linalg::max_diag(&s_oo).max(resid.abs().max()).max(1.0);
    let consistency = (&proj - &resid).abs().max();
    let tol = 1e-6 * scale;
    if consistency > tol {
        return Err(GaussianError::InconsistentObservation { residual: consistency, tol });
    }

    let gain = &s_uo * &pinv;
    let cond_mean_mat = &gain * &resid;
    let mut cond_mean = Vec::with_capacity(nu);
    for (a, &i) in unobs.iter().enumerate() {
        cond_mean.push(gv.mean()[i] + cond_mean_mat[(a, 0)]);
    }
    let mut cond_cov = &s_uu - &gain * s_uo.transpose();
    // symmetrize rounding noise before the PSD check
    for a in 0..nu {
        for b in 0..a {
            let v = 0.5 * (cond_cov[(a, b)] + cond_cov[(b, a)]);
            cond_cov[(a, b)] = v;
            cond_cov[(b, a)] = v;
        }
    }

    let times: Vec<f64> = unobs.iter().map(|&i| gv.gram().grid().times()[i]).collect();
    let grid = Grid::new(times)?;
    let parent = gv.gram();
    let gram = GramMatrix::from_dense(
        grid,
        cond_cov,
        GramSource::Conditioned,
        parent.quad_step,
        parent.l,
        parent.tail_error,
        parent.normalized,
        parent.convergence_delta,
        PSD_TOL,
    )?;
    GaussianVector::new(cond_mean, gram)
}

/// How an ensemble was generated; stored in export metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SimMethod {
    Cholesky,
    Direct { substeps: usize, l: f64 },
}

/// Seeded ensemble of simulated paths on a grid, row per path.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: Grid,
    pub seed: u64,
    pub method: SimMethod,
    n_paths: usize,
    data: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[p * n..(p + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.grid.len())
    }

    /// Column means and the unbiased sample covariance matrix.
    pub fn empirical_covariance(&self) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.grid.len();
        let m = self.n_paths;
        let mut mean = vec![0.0; n];
        for row in self.rows() {
            for (a, &x) in mean.iter_mut().zip(row) {
                *a += x;
            }
        }
        for a in mean.iter_mut() {
            *a /= m as f64;
        }
        let mut cov = DMatrix::zeros(n, n);
        for row in self.rows() {
            for i in 0..n {
                let di = row[i] - mean[i];
                for j in 0..=i {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                let v = cov[(i, j)] / (m as f64 - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        (mean, cov)
    }
}

fn fill_rows<F: Sync + Fn(usize, &mut [f64])>(data: &mut [f64], n: usize, f: F) {
    #[cfg(not(target_arch = "wasm32"))]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(n).enumerate().for_each(|(p, row)| f(p, row));
    }
    #[cfg(target_arch = "wasm32")]
    {
        for (p, row) in data.chunks_mut(n).enumerate() {
            f(p, row);
        }
    }
}

/// `n_paths` i.i.d. draws `mean + B z` through the pivoted factor.
///
/// Path `p` consumes normals `(seed, stream = p, draw = 0..rank)`, so the
/// ensemble is identical under any parallel schedule.
pub fn sample(gv: &GaussianVector, n_paths: usize, seed: u64) -> Result<PathEnsemble, GaussianError> {
    if n_paths == 0 {
        return Err(GaussianError::Invalid("n_paths must be positive".into()));
    }
    let factor = factor_psd(gv.gram())?;
    let n = gv.n();
    let rank = factor.rank();
    let mean = gv.mean().to_vec();
    let mut data = vec![0.0; n_paths * n];
    fill_rows(&mut data, n, |p, row| {
        let z: Vec<f64> = (0..rank).map(|k| rng::normal_at(seed, p as u64, k as u64)).collect();
        factor.apply(&z, row);
        for (x, m) in row.iter_mut().zip(&mean) {
            *x += m;
        }
    });
    Ok(PathEnsemble {
        grid: gv.gram().grid().clone(),
        seed,
        method: SimMethod::Cholesky,
        n_paths,
        data,
    })
}

/// What the direct simulator integrates.
#[derive(Debug, Clone, Copy)]
pub enum SimTarget<'a> {
    Kernel(&'a MovingAverageKernel),
    Counterexample(&'a CounterexampleSpec),
}

/// Driver substep midpoints and widths spanning `[-l_eff, T]`, aligned so
/// grid times and 0 are substep boundaries.
struct Driver {
    mids: Vec<f64>,
    widths: Vec<f64>,
}

fn build_driver(grid: &Grid, substeps: usize, l_eff: f64) -> Driver {
    let delta = grid.min_spacing() / substeps as f64;
    let mut bounds = vec![-l_eff];
    if l_eff > 0.0 {
        bounds.push(0.0);
    }
    for &t in grid.times() {
        if t > 0.0 {
            bounds.push(t);
        }
    }
    let mut mids = Vec::new();
    let mut widths = Vec::new();
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((b - a) / delta).ceil().max(1.0) as usize;
        let h = (b - a) / m as f64;
        for k in 0..m {
            mids.push(a + (k as f64 + 0.5) * h);
            widths.push(h);
        }
    }
    Driver { mids, widths }
}

/// Simulates the defining stochastic integral directly:
/// `X_{t_i} ≈ Σ_j k(t_i, s_j) ΔB_j` over a refined grid spanning
/// `[-L, T]`, kernel evaluated at substep midpoints.
///
/// For the counterexample process the displayed two-term definition is
/// simulated literally from a Brownian path on [0, 1] (band increment plus
/// the time-integral term), not the derived band kernel; that independence
/// is the point of the oracle. `l` is ignored there.
pub fn direct_simulate(
    target: SimTarget,
    grid: &Grid,
    n_paths: usize,
    seed: u64,
    substeps: usize,
    l: f64,
) -> Result<PathEnsemble, GaussianError> {
    if n_paths == 0 || substeps == 0 {
        return Err(GaussianError::Invalid("n_paths and substeps must be positive".into()));
    }
    match target {
        SimTarget::Kernel(kernel) => {
            if !(l.is_finite() && l > 0.0) {
                return Err(GaussianError::Invalid(format!("l must be positive, got {l}")));
            }
            let weights = kernel_weights(kernel, grid, substeps, l);
            let n = grid.len();
            let j = weights.draws;
            let mut data = vec![0.0; n_paths * n];
            fill_rows(&mut data, n, |p, row| {
                let z: Vec<f64> = (0..j).map(|k| rng::normal_at(seed, p as u64, k as u64)).collect();
                for (i, out) in row.iter_mut().enumerate() {
                    let wrow = &weights.w[i * j..(i + 1) * j];
                    let mut acc = 0.0;
                    for (a, b) in wrow.iter().zip(&z) {
                        acc += a * b;
                    }
                    *out = acc;
                }
            });
            Ok(PathEnsemble {
                grid: grid.clone(),
                seed,
                method: SimMethod::Direct { substeps, l },
                n_paths,
                data,
            })
        }
        SimTarget::Counterexample(spec) => {
            if grid.t_max() > 1.0 {
                return Err(GaussianError::Invalid("counterexample grid must lie in [0, 1]".into()));
            }
            simulate_counterexample(spec, grid, n_paths, seed, substeps)
        }
    }
}

struct KernelWeights {
    /// Row-major `n x draws`; entry = k(t_i, mid_j) * sqrt(width_j).
    w: Vec<f64>,
    draws: usize,
}

fn kernel_weights(kernel: &MovingAverageKernel, grid: &Grid, substeps: usize, l: f64) -> KernelWeights {
    let l_eff = match kernel.support_lower() {
        Some(s) => l.min(-s.min(0.0)),
        None => l,
    };
    let driver = build_driver(grid, substeps, l_eff);
    let n = grid.len();
    let j = driver.mids.len();
    let mut w = vec![0.0; n * j];
    for (i, &t) in grid.times().iter().enumerate() {
        for (jj, (&s, &width)) in driver.mids.iter().zip(&driver.widths).enumerate() {
            w[i * j + jj] = kernel.increment_unchecked(t, s) * width.sqrt();
        }
    }
    KernelWeights { w, draws: j }
}

/// Exact covariance of the discretized Riemann-sum process
/// (`K diag(width) K^T`). Isolates the kernel-discretization bias from
/// Monte Carlo noise: the simulated ensemble is exactly Gaussian with this
/// covariance.
pub fn direct_discretized_covariance(
    kernel: &MovingAverageKernel,
    grid: &Grid,
    substeps: usize,
    l: f64,
) -> DMatrix<f64> {
    let weights = kernel_weights(kernel, grid, substeps, l);
    let n = grid.len();
    let j = weights.draws;
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..=i {
            let a = &weights.w[i * j..(i + 1) * j];
            let b = &weights.w[k * j..(k + 1) * j];
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b) {
                acc += x * y;
            }
            cov[(i, k)] = acc;
            cov[(k, i)] = acc;
        }
    }
    cov
}

fn simulate_counterexample(
    spec: &CounterexampleSpec,
    grid: &Grid,
    n_paths: usize,
    seed: u64,
    substeps: usize,
) -> Result<PathEnsemble, GaussianError> {
    // dyadic driver step: resolves every band and aligns their boundaries
    let raw = grid.min_spacing() / substeps as f64;
    let requested = spec.driver_step(raw);
    let m_exp = (-requested.log2()).ceil() as i32;
    let delta = (2.0f64).powi(-m_exp);
    let steps = (1.0 / delta).round() as usize;

    let n = grid.len();
    let grid_idx: Vec<usize> =
        grid.times().iter().map(|&t| ((t / delta).round() as usize).min(steps)).collect();
    let sigma_sign = if spec.corrected_sign { 1.0 } else { -1.0 };

    struct Band {
        i1: usize,
        i2: usize,
        b: f64,
        coeff: f64,
        a1: f64,
    }
    let bands: Vec<Band> = (0..spec.n_max)
        .map(|nn| Band {
            i1: ((CounterexampleSpec::a(nn) / delta).round() as usize).min(steps),
            i2: ((CounterexampleSpec::a(nn + 1) / delta).round() as usize).min(steps),
            b: spec.b(nn),
            coeff: (2.0f64).powi(2 * nn as i32 + 3),
            a1: CounterexampleSpec::a(nn + 1),
        })
        .collect();

    let times = grid.times().to_vec();
    let sqrt_delta = delta.sqrt();
    let mut data = vec![0.0; n_paths * n];
    fill_rows(&mut data, n, |p, row| {
        // Brownian path nodes B_0 .. B_steps
        let mut b_path = vec![0.0; steps + 1];
        let mut acc = 0.0;
        for k in 0..steps {
            acc += sqrt_delta * rng::normal_at(seed, p as u64, k as u64);
            b_path[k + 1] = acc;
        }
        row.fill(0.0);
        for band in &bands {
            // Q = ∫_{a_n}^1 (B_{s ∧ a_{n+1}} - B_{a_n}) ds by trapezoid on the nodes
            let base = b_path[band.i1];
            let mut q = 0.0;
            for k in band.i1 + 1..steps {
                q += b_path[k.min(band.i2)] - base;
            }
            q += 0.5 * (b_path[steps.min(band.i2)] - base);
            q *= delta;
            for (i, out) in row.iter_mut().enumerate() {
                let g = grid_idx[i];
                let term1 = if g > band.i1 {
                    b_path[g.min(band.i2)] - base
                } else {
                    0.0
                };
                let term2 = band.coeff * q * (times[i] - band.a1).max(0.0);
                *out += band.b * (term1 - sigma_sign * term2);
            }
        }
    });
    Ok(PathEnsemble {
        grid: grid.clone(),
        seed,
        method: SimMethod::Direct { substeps, l: 0.0 },
        n_paths,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{counterexample_gram, gram, GramOptions};
    use approx::assert_abs_diff_eq;

    fn bm_gram() -> GramMatrix {
        let grid = Grid::new(vec![0.25, 0.5, 1.0]).unwrap();
        GramMatrix::fbm_closed(&grid, 0.5).unwrap()
    }

    #[test]
    fn factor_reconstructs_brownian_gram() {
        let g = bm_gram();
        let f = factor_psd(&g).unwrap();
        assert_eq!(f.rank(), 3);
        assert!((f.reconstruct() - g.sigma()).abs().max() < 1e-12);
    }

    #[test]
    fn condition_matches_bivariate_textbook_formula() {
        let grid = Grid::new(vec![1.0, 2.0]).unwrap();
        for rho in [0.0, 0.35, -0.7] {
            let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let gm = GramMatrix::from_dense(
                grid.clone(),
                sigma,
                GramSource::Imported,
                0.0,
                0.0,
                0.0,
                false,
                0.0,
                1e-8,
            )
            .unwrap();
            let gv = GaussianVector::zero_mean(gm);
            let x = 0.8;
            let cond = condition(&gv, &[0], &[x]).unwrap();
            assert_abs_diff_eq!(cond.mean()[0], rho * x, epsilon = 1e-12);
            assert_abs_diff_eq!(cond.gram().var(0), 1.0 - rho * rho, epsilon = 1e-12);
        }
    }

    #[test]
    fn condition_handles_duplicated_coordinates() {
        let grid = Grid::new(vec![1.0, 2.0]).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let gm = GramMatrix::from_dense(
            grid, sigma, GramSource::Imported, 0.0, 0.0, 0.0, false, 0.0, 1e-8,
        )
        .unwrap();
        let gv = GaussianVector::zero_mean(gm);
        let cond = condition(&gv, &[0], &[0.3]).unwrap();
        assert_abs_diff_eq!(cond.mean()[0], 0.3, epsilon = 1e-10);
        assert!(cond.gram().var(0).abs() < 1e-10);
    }

    #[test]
    fn condition_rejects_inconsistent_degenerate_observation() {
        let grid = Grid::new(vec![1.0, 2.0, 3.0]).unwrap();
        // coordinates 0 and 1 are identical; observing them apart is impossible
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let gm = GramMatrix::from_dense(
            grid, sigma, GramSource::Imported, 0.0, 0.0, 0.0, false, 0.0, 1e-8,
        )
        .unwrap();
        let gv = GaussianVector::zero_mean(gm);
        assert!(matches!(
            condition(&gv, &[0, 1], &[0.5, -0.5]),
            Err(GaussianError::InconsistentObservation { .. })
        ));
        assert!(condition(&gv, &[0, 1], &[0.5, 0.5]).is_ok());
    }

    #[test]
    fn conditioning_in_stages_matches_joint_conditioning() {
        let grid = Grid::new(vec![0.25, 0.5, 1.0, 1.5]).unwrap();
        let gm = GramMatrix::fbm_closed(&grid, 0.75).unwrap();
        let gv = GaussianVector::zero_mean(gm);
        let joint = condition(&gv, &[0, 1], &[0.2, -0.1]).unwrap();
        let staged = condition(&condition(&gv, &[0], &[0.2]).unwrap(), &[0], &[-0.1]).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(joint.mean()[i], staged.mean()[i], epsilon = 1e-8);
            for j in 0..2 {
                assert_abs_diff_eq!(
                    joint.gram().entry(i, j),
                    staged.gram().entry(i, j),
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn zero_covariance_samples_equal_the_mean() {
        let grid = Grid::new(vec![1.0, 2.0]).unwrap();
        let sigma = DMatrix::zeros(2, 2);
        let gm = GramMatrix::from_dense(
            grid, sigma, GramSource::Imported, 0.0, 0.0, 0.0, false, 0.0, 1e-8,
        )
        .unwrap();
        let gv = GaussianVector::new(vec![3.0, -1.0], gm).unwrap();
        let ens = sample(&gv, 16, 9).unwrap();
        for row in ens.rows() {
            assert_eq!(row, &[3.0, -1.0]);
        }
    }

    #[test]
    fn sample_variance_matches_normal_theory() {
        let g = bm_gram();
        let gv = GaussianVector::zero_mean(g);
        let m = 100_000;
        let ens = sample(&gv, m, 2024).unwrap();
        let (_, cov) = ens.empirical_covariance();
        // Var of the sample variance of N(0, 1) scaled: se = var * sqrt(2/M)
        let se = 1.0 * (2.0 / m as f64).sqrt();
        assert!((cov[(2, 2)] - 1.0).abs() < 3.0 * se, "got {}", cov[(2, 2)]);
    }

    #[test]
    fn same_seed_same_ensemble_under_any_thread_count() {
        let g = bm_gram();
        let gv = GaussianVector::zero_mean(g);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| sample(&gv, 500, 77).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.data, b.data);
        let c = run(1);
        assert_eq!(a.data, c.data);
    }

    #[test]
    fn direct_simulation_reproduces_brownian_covariance() {
        let bm = MovingAverageKernel::brownian();
        let grid = Grid::new(vec![0.25, 0.5, 1.0]).unwrap();
        let m = 60_000;
        let ens = direct_simulate(SimTarget::Kernel(&bm), &grid, m, 31, 8, 1.0).unwrap();
        let (mean, cov) = ens.empirical_covariance();
        let disc = direct_discretized_covariance(&bm, &grid, 8, 1.0);
        for i in 0..3 {
            assert!(mean[i].abs() < 4.0 * (grid.times()[i] / m as f64).sqrt());
            for j in 0..3 {
                let truth = disc[(i, j)];
                let se = ((disc[(i, i)] * disc[(j, j)] + truth * truth) / m as f64).sqrt();
                assert!(
                    (cov[(i, j)] - truth).abs() < 3.5 * se,
                    "entry ({i},{j}): {} vs {truth}",
                    cov[(i, j)]
                );
                // BM discretization is exact up to grid alignment
                assert_abs_diff_eq!(truth, grid.times()[i].min(grid.times()[j]), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn direct_simulation_indicator_covariance_is_twice_min() {
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        let grid = Grid::new(vec![0.5, 1.0]).unwrap();
        let disc = direct_discretized_covariance(&ind, &grid, 16, 2.0);
        for i in 0..2 {
            for j in 0..2 {
                let expect = 2.0 * grid.times()[i].min(grid.times()[j]);
                assert!(
                    (disc[(i, j)] - expect).abs() < 0.02,
                    "({i},{j}): {} vs {expect}",
                    disc[(i, j)]
                );
            }
        }
    }

    #[test]
    fn discretized_covariance_bias_shrinks_under_substep_doubling() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let grid = Grid::new(vec![0.5, 1.0]).unwrap();
        let opts = GramOptions { l: Some(8.0), ..GramOptions::default() };
        let g = gram(&k, &grid, &opts).unwrap();
        let err = |sub: usize| {
            let d = direct_discretized_covariance(&k, &grid, sub, 8.0);
            (&d - g.sigma()).abs().max()
        };
        let (e8, e16, e32) = (err(8), err(16), err(32));
        assert!(e16 < e8, "{e16} !< {e8}");
        assert!(e32 < e16, "{e32} !< {e16}");
    }

    #[test]
    fn counterexample_direct_simulation_matches_band_kernel_gram() {
        let spec = CounterexampleSpec { n_max: 4, ..Default::default() };
        let grid = Grid::new(vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        let g = counterexample_gram(&spec, &grid).unwrap();
        let m = 50_000;
        let ens = direct_simulate(SimTarget::Counterexample(&spec), &grid, m, 5150, 4, 0.0).unwrap();
        let (_, cov) = ens.empirical_covariance();
        for i in 0..grid.len() {
            for j in 0..=i {
                let truth = g.entry(i, j);
                let se =
                    ((g.var(i) * g.var(j) + truth * truth) / m as f64).sqrt();
                assert!(
                    (cov[(i, j)] - truth).abs() < 3.5 * se + 0.005,
                    "entry ({i},{j}): {} vs {truth}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn standardized_sample_skewness_vanishes() {
        let g = bm_gram();
        let gv = GaussianVector::zero_mean(g);
        let m = 120_000;
        let ens = sample(&gv, m, 11).unwrap();
        let idx = 2;
        let (mean, cov) = ens.empirical_covariance();
        let sd = cov[(idx, idx)].sqrt();
        let mut m3 = 0.0;
        let mut abs3 = 0.0;
        for row in ens.rows() {
            let z = (row[idx] - mean[idx]) / sd;
            m3 += z * z * z;
            abs3 += z.abs().powi(3);
        }
        m3 /= m as f64;
        abs3 /= m as f64;
        assert!(abs3.is_finite() && abs3 < 10.0);
        let se = (6.0 / m as f64).sqrt();
        assert!(m3.abs() < 4.0 * se, "skewness {m3} vs 4se {}", 4.0 * se);
    }
}
