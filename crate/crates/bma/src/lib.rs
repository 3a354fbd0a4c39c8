//! Gaussian moving-average (Volterra) processes on finite time grids.
//!
//! The central object is the process
//!
//! ```text
//! X_t = ∫_{-∞}^t (f(s-t) - f(s)) dB_s,   t ≥ 0,
//! ```
//!
//! driven by a two-sided Brownian motion, where the kernel `f` vanishes on
//! the nonnegative half-line. Fractional Brownian motion is the special case
//! `f(x) = (-x)^{H-1/2}`, and Brownian motion itself is `H = 1/2`.
//!
//! The crate provides:
//!
//! * [`kernel`] — kernel families, the induced two-sided integrand, tail
//!   bounds for the infinite-past truncation, and a dyadic counterexample
//!   process built from band-limited kernels;
//! * [`covariance`] — exact covariance (Gram) matrices on a grid via
//!   composite midpoint quadrature with truncation control, plus closed
//!   forms used for validation;
//! * [`gaussian`] — pivoted PSD factorization, Gaussian conditioning via
//!   Schur complements, reproducible path sampling, and a direct
//!   stochastic-integral simulator that serves as an independent oracle;
//! * [`cfs`] — grid-level conditional-full-support diagnostics: conditional
//!   increment variances, degenerate-functional scans, tube (small-ball)
//!   probabilities, history drift and reachable Girsanov shifts;
//! * [`deconv`] — the causal Volterra convolution operator, its regularized
//!   inversion, and support-edge (Titchmarsh) diagnostics.
//!
//! All randomness is counter-based and keyed by `(seed, stream, counter)`,
//! so every result is reproducible bit-for-bit regardless of thread count.

pub mod cfs;
pub mod covariance;
pub mod deconv;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod rng;

mod linalg;
mod quadrature;

pub use covariance::{fbm_cov_closed, GramMatrix, GramMode, GramOptions};
pub use gaussian::{GaussianVector, PathEnsemble, SimMethod};
pub use grid::Grid;
pub use kernel::{CounterexampleSpec, MovingAverageKernel, TwoSidedKernel};
