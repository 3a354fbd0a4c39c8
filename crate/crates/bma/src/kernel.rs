//! Moving-average kernels `f` and the induced two-sided integrands.
//!
//! A kernel is a function `f: R -> R` with `f = 0` on the nonnegative
//! half-line and square-integrable increments, so that
//! `X_t = ∫_{-∞}^t (f(s-t) - f(s)) dB_s` is a well-defined Gaussian process.
//! Three families are supported:
//!
//! * `Fbm { hurst }` — `f(x) = (-x)^{H-1/2}` for `x < 0`, the fractional
//!   Brownian motion kernel at unit scale (no normalization constant is
//!   baked in; the covariance module can rescale to unit variance at t = 1);
//! * `Indicator { width }` — `f = 1` on `[-c, 0)`, zero elsewhere;
//! * `Tabulated { xs, vals }` — linear interpolation inside the tabulated
//!   range (all `xs <= 0`, strictly increasing), zero outside.
//!
//! The module also houses [`CounterexampleSpec`]: a continuous Gaussian
//! process on [0, 1] assembled from kernels supported on the dyadic bands
//! `[a_n, a_{n+1}]`, `a_n = 1 - 2^{-n}`, constructed so that every
//! conditional increment variance is positive while the linear functional
//! `∫_0^1 X_t dt` is exactly degenerate. It witnesses that the discrete-time
//! positive-conditional-variance criterion does not transfer to continuous
//! time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("input must be finite, got {0}")]
    NonFinite(f64),
    #[error("hurst index must lie in (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("indicator width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("truncation hint must be positive and finite, got {0}")]
    InvalidTruncationHint(f64),
    #[error("invalid tabulation: {0}")]
    BadTabulation(String),
    #[error("component index {n} out of range, spec has n_max = {n_max}")]
    ComponentOutOfRange { n: usize, n_max: usize },
    #[error("time must be nonnegative and finite, got {0}")]
    InvalidTime(f64),
    #[error("csv error: {0}")]
    Csv(String),
}

/// Kernel family tag plus family-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Fbm { hurst: f64 },
    Indicator { width: f64 },
    Tabulated { xs: Vec<f64>, vals: Vec<f64> },
}

/// A moving-average kernel: family, positive scale multiplier, and a default
/// truncation depth for quadrature over the infinite past.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageKernel {
    family: KernelFamily,
    scale: f64,
    truncation_hint: f64,
}

/// Target used to size the default FBM truncation depth: the closed-form
/// tail bound at t = 1 is pushed below this value, within the depth caps.
const FBM_TAIL_TARGET: f64 = 1e-7;
const FBM_HINT_MIN: f64 = 1e3;
const FBM_HINT_MAX: f64 = 1e12;

fn fbm_default_hint(hurst: f64) -> f64 {
    let a = hurst - 0.5;
    if a == 0.0 {
        // Brownian motion has no history term at all.
        return 1.0;
    }
    // Solve a^2 * L^{2H-2} / (2-2H) = target for L.
    let base = FBM_TAIL_TARGET * (2.0 - 2.0 * hurst) / (a * a);
    let l = base.powf(1.0 / (2.0 * hurst - 2.0));
    l.clamp(FBM_HINT_MIN, FBM_HINT_MAX)
}

impl MovingAverageKernel {
    pub fn new(family: KernelFamily, scale: f64, truncation_hint: Option<f64>) -> Result<Self, KernelError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KernelError::InvalidScale(scale));
        }
        match &family {
            KernelFamily::Fbm { hurst } => {
                if !(hurst.is_finite() && *hurst > 0.0 && *hurst < 1.0) {
                    return Err(KernelError::InvalidHurst(*hurst));
                }
            }
            KernelFamily::Indicator { width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(KernelError::InvalidWidth(*width));
                }
            }
            KernelFamily::Tabulated { xs, vals } => {
                if xs.len() != vals.len() {
                    return Err(KernelError::BadTabulation(format!(
                        "xs has {} entries, vals has {}",
                        xs.len(),
                        vals.len()
                    )));
                }
                if xs.len() < 2 {
                    return Err(KernelError::BadTabulation("need at least 2 points".into()));
                }
                for w in xs.windows(2) {
                    if w[1] <= w[0] || w[1].is_nan() || w[0].is_nan() {
                        return Err(KernelError::BadTabulation("xs must be strictly increasing".into()));
                    }
                }
                let last = *xs.last().unwrap();
                if last > 0.0 {
                    return Err(KernelError::BadTabulation("all xs must be <= 0".into()));
                }
                if last == 0.0 && *vals.last().unwrap() != 0.0 {
                    return Err(KernelError::BadTabulation(
                        "f must vanish on x >= 0; val at x = 0 must be 0".into(),
                    ));
                }
                if !xs.iter().chain(vals.iter()).all(|v| v.is_finite()) {
                    return Err(KernelError::BadTabulation("non-finite entry".into()));
                }
                if !vals.iter().any(|v| *v != 0.0) {
                    return Err(KernelError::BadTabulation(
                        "kernel is identically zero (degenerate)".into(),
                    ));
                }
            }
        }
        let hint = match truncation_hint {
            Some(h) => {
                if !(h.is_finite() && h > 0.0) {
                    return Err(KernelError::InvalidTruncationHint(h));
                }
                h
            }
            None => match &family {
                KernelFamily::Fbm { hurst } => fbm_default_hint(*hurst),
                KernelFamily::Indicator { width } => *width,
                KernelFamily::Tabulated { xs, .. } => -xs[0],
            },
        };
        Ok(Self { family, scale, truncation_hint: hint })
    }

    pub fn fbm(hurst: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Fbm { hurst }, 1.0, None)
    }

    pub fn brownian() -> Self {
        Self::fbm(0.5).unwrap()
    }

    pub fn indicator(width: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Indicator { width }, 1.0, None)
    }

    pub fn tabulated(xs: Vec<f64>, vals: Vec<f64>) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Tabulated { xs, vals }, 1.0, None)
    }

    /// Load a tabulated kernel from two-column CSV `(x, f(x))`.
    /// A header row is accepted and skipped.
    pub fn tabulated_from_csv<R: std::io::Read>(reader: R) -> Result<Self, KernelError> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| KernelError::Csv(e.to_string()))?;
            if rec.len() != 2 {
                return Err(KernelError::Csv(format!("row {} has {} fields, expected 2", i, rec.len())));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vals.push(v);
                }
                _ if i == 0 => continue, // header row
                _ => return Err(KernelError::Csv(format!("row {} is not numeric", i))),
            }
        }
        Self::tabulated(xs, vals)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self, KernelError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KernelError::InvalidScale(scale));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn truncation_hint(&self) -> f64 {
        self.truncation_hint
    }

    pub fn hurst(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Fbm { hurst } => Some(hurst),
            _ => None,
        }
    }

    /// Whether the family is a semimartingale for the induced process
    /// (metadata only): true when `f` is absolutely continuous with a
    /// square-integrable derivative on the half-line.
    pub fn semimartingale_flag(&self) -> bool {
        match &self.family {
            KernelFamily::Fbm { hurst } => *hurst == 0.5,
            KernelFamily::Indicator { .. } => false,
            KernelFamily::Tabulated { .. } => true,
        }
    }

    /// Evaluate `f(x)`. Exactly zero for every `x >= 0`.
    pub fn eval(&self, x: f64) -> Result<f64, KernelError> {
        if !x.is_finite() {
            return Err(KernelError::NonFinite(x));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        if x >= 0.0 {
            return 0.0;
        }
        let raw = match &self.family {
            KernelFamily::Fbm { hurst } => (-x).powf(hurst - 0.5),
            KernelFamily::Indicator { width } => {
                if x >= -width {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Tabulated { xs, vals } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    0.0
                } else {
                    // binary search for the bracketing segment
                    let idx = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
                        Ok(i) => return vals[i] * self.scale,
                        Err(i) => i,
                    };
                    let (x0, x1) = (xs[idx - 1], xs[idx]);
                    let (v0, v1) = (vals[idx - 1], vals[idx]);
                    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
                }
            }
        };
        raw * self.scale
    }

    /// The two-sided integrand `f(s - t) - f(s)`; zero for all `s > t`.
    pub fn increment(&self, t: f64, s: f64) -> Result<f64, KernelError> {
        if !t.is_finite() || t < 0.0 {
            return Err(KernelError::InvalidTime(t));
        }
        if !s.is_finite() {
            return Err(KernelError::NonFinite(s));
        }
        Ok(self.increment_unchecked(t, s))
    }

    #[inline]
    pub(crate) fn increment_unchecked(&self, t: f64, s: f64) -> f64 {
        if s > t || t == 0.0 {
            return 0.0;
        }
        if s > 0.0 {
            // f(s) = 0 here.
            return self.eval_unchecked(s - t);
        }
        match &self.family {
            KernelFamily::Fbm { hurst } => {
                let a = hurst - 0.5;
                if a == 0.0 {
                    return 0.0;
                }
                if s == 0.0 {
                    return t.powf(a) * self.scale;
                }
                // (u + t)^a - u^a computed without cancellation for large u.
                let u = -s;
                self.scale * u.powf(a) * (a * (t / u).ln_1p()).exp_m1()
            }
            _ => self.eval_unchecked(s - t) - self.eval_unchecked(s),
        }
    }

    /// Upper estimate of the omitted variance
    /// `∫_{-∞}^{-L} (f(s-t) - f(s))^2 ds`.
    ///
    /// Closed-form power-law bound for `fbm`, exact for compactly
    /// supported families, numeric doubling estimate for `tabulated`.
    pub fn tail_bound(&self, t: f64, l: f64) -> Result<f64, KernelError> {
        if !t.is_finite() || t < 0.0 {
            return Err(KernelError::InvalidTime(t));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(KernelError::InvalidTruncationHint(l));
        }
        let s2 = self.scale * self.scale;
        let val = match &self.family {
            KernelFamily::Fbm { hurst } => {
                let a = hurst - 0.5;
                if a == 0.0 || t == 0.0 {
                    0.0
                } else {
                    // |(u+t)^a - u^a| <= |a| t u^{a-1} for u >= L, so the tail is
                    // bounded by a^2 t^2 ∫_L^∞ u^{2a-2} du.
                    s2 * a * a * t * t * l.powf(2.0 * hurst - 2.0) / (2.0 - 2.0 * hurst)
                }
            }
            KernelFamily::Indicator { width } => {
                // Integrand is -1 exactly on [-c, min(t - c, -L)), zero below -c.
                s2 * (width - l).min(t).max(0.0)
            }
            KernelFamily::Tabulated { xs, .. } => {
                let lo = xs[0];
                if -l <= lo {
                    0.0
                } else {
                    // Bounded support: integrate the slice [-L0, -L] numerically,
                    // refining until a doubling changes nothing.
                    self.increment_sq_slice(t, lo, -l)
                }
            }
        };
        Ok(val)
    }

    /// Midpoint quadrature of `(f(s-t)-f(s))^2` over `[a, b]`, doubling the
    /// resolution until the estimate is stable.
    fn increment_sq_slice(&self, t: f64, a: f64, b: f64) -> f64 {
        let mut n = 256usize;
        let mut prev = f64::INFINITY;
        loop {
            let h = (b - a) / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let s = a + (i as f64 + 0.5) * h;
                let k = self.increment_unchecked(t, s);
                acc += k * k;
            }
            acc *= h;
            if (acc - prev).abs() <= 1e-12 * (1.0 + acc.abs()) || n >= 1 << 20 {
                return acc;
            }
            prev = acc;
            n *= 2;
        }
    }

    /// Points where `f` itself is non-smooth (jumps, kinks, or a power-law
    /// endpoint). Quadrature places segment boundaries at these points,
    /// shifted by each active time argument.
    pub(crate) fn feature_points(&self) -> Vec<f64> {
        match &self.family {
            KernelFamily::Fbm { .. } => vec![0.0],
            KernelFamily::Indicator { width } => vec![-width, 0.0],
            KernelFamily::Tabulated { xs, .. } => xs.clone(),
        }
    }

    /// Points where `f` diverges or has unbounded derivative, needing
    /// geometric endpoint refinement in the quadrature.
    pub(crate) fn singular_points(&self) -> Vec<f64> {
        match &self.family {
            KernelFamily::Fbm { hurst } if *hurst != 0.5 => vec![0.0],
            _ => vec![],
        }
    }

    /// Lowest `s` at which the increment integrand can be nonzero
    /// (`None` means unbounded support in the past).
    pub(crate) fn support_lower(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Fbm { hurst } => {
                if *hurst == 0.5 {
                    Some(0.0)
                } else {
                    None
                }
            }
            KernelFamily::Indicator { width } => Some(-width),
            KernelFamily::Tabulated { xs, .. } => Some(xs[0]),
        }
    }

    /// True when the history part vanishes identically (Brownian motion).
    pub fn is_history_free(&self) -> bool {
        matches!(self.family, KernelFamily::Fbm { hurst } if hurst == 0.5)
    }

    /// Convergence and nondegeneracy diagnostics.
    ///
    /// For each probe time, the increment variance truncated at depth `L` is
    /// checked for stability under successive doublings of `L`.
    pub fn validate(&self, probe_times: &[f64], tol: f64) -> Result<KernelDiagnostics, KernelError> {
        let l0 = self.truncation_hint.max(1.0);
        let mut max_delta: f64 = 0.0;
        for &t in probe_times {
            if !t.is_finite() || t < 0.0 {
                return Err(KernelError::InvalidTime(t));
            }
            // Contribution of (-2L, -L] plus the closed-form bound below -2L:
            // an upper estimate of everything a doubling can still add.
            let slice = self.increment_sq_slice(t, -2.0 * l0, -l0);
            let beyond = self.tail_bound(t, 2.0 * l0)?;
            max_delta = max_delta.max(slice + beyond);
        }
        Ok(KernelDiagnostics {
            nondegenerate: true, // families are validated non-zero at construction
            tail_converged: max_delta < tol,
            max_doubling_delta: max_delta,
            truncation_depth: l0,
        })
    }
}

/// Result of [`MovingAverageKernel::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct KernelDiagnostics {
    pub nondegenerate: bool,
    pub tail_converged: bool,
    pub max_doubling_delta: f64,
    pub truncation_depth: f64,
}

/// The split of `X_u` into the fresh part `∫_0^u f(v-u) dB_v` and the
/// history part `Y_u = ∫_{-L}^0 (f(v-u) - f(v)) dB_v`, with the omitted
/// variance below `-L` bounded over a working grid.
#[derive(Debug, Clone)]
pub struct TwoSidedKernel {
    kernel: MovingAverageKernel,
    l: f64,
    tail_error_bound: f64,
}

impl TwoSidedKernel {
    pub fn new(kernel: MovingAverageKernel, grid_times: &[f64], l: f64) -> Result<Self, KernelError> {
        if !(l.is_finite() && l > 0.0) {
            return Err(KernelError::InvalidTruncationHint(l));
        }
        let mut bound: f64 = 0.0;
        for &t in grid_times {
            bound = bound.max(kernel.tail_bound(t, l)?);
        }
        Ok(Self { kernel, l, tail_error_bound: bound })
    }

    /// `k_fresh(t, s) = f(s - t)` for `0 <= s <= t`, zero for `s > t`.
    pub fn fresh(&self, t: f64, s: f64) -> f64 {
        if s > t || s < 0.0 {
            0.0
        } else {
            self.kernel.eval_unchecked(s - t)
        }
    }

    /// `k_hist(t, s) = f(s - t) - f(s)` for `s <= 0`.
    pub fn history(&self, t: f64, s: f64) -> f64 {
        if s > 0.0 {
            0.0
        } else {
            self.kernel.increment_unchecked(t, s)
        }
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn tail_error_bound(&self) -> f64 {
        self.tail_error_bound
    }

    pub fn kernel(&self) -> &MovingAverageKernel {
        &self.kernel
    }
}

/// Rule producing the positive weights `b_n` of the counterexample process.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BWeightRule {
    /// `b_n = 2^{-n}` (default).
    #[default]
    Pow2,
    /// `b_n = ratio^n` for a fixed ratio in (0, 1].
    Geometric { ratio: f64 },
    /// `b_n = c` for every component.
    Constant { value: f64 },
}

impl BWeightRule {
    pub fn weight(&self, n: usize) -> f64 {
        match self {
            BWeightRule::Pow2 => (0.5f64).powi(n as i32),
            BWeightRule::Geometric { ratio } => ratio.powi(n as i32),
            BWeightRule::Constant { value } => *value,
        }
    }

    fn validate(&self) -> Result<(), KernelError> {
        let ok = match self {
            BWeightRule::Pow2 => true,
            BWeightRule::Geometric { ratio } => ratio.is_finite() && *ratio > 0.0 && *ratio <= 1.0,
            BWeightRule::Constant { value } => value.is_finite() && *value > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(KernelError::InvalidScale(f64::NAN))
        }
    }
}

/// Specification of the dyadic counterexample process on [0, 1].
///
/// Component `n` lives on the Brownian band `[a_n, a_{n+1}]`,
/// `a_n = 1 - 2^{-n}`, and consists of the band increment of `B` plus a
/// drift-like term proportional to `∫_{a_n}^1 (B_{s∧a_{n+1}} - B_{a_n}) ds`.
/// With `corrected_sign = true` the second term enters with coefficient
/// `-b_n 2^{2n+3}`, which makes `∫_0^1 X_t dt` vanish identically: the
/// scalar identity `1 - 2^{2n+3} ∫_{a_{n+1}}^1 (s - a_{n+1}) ds = 0` holds
/// exactly for every `n`. With `corrected_sign = false` the term enters
/// with `+`, the identity fails (the bracket evaluates to 2), and the
/// integral functional is far from degenerate; that variant is kept for
/// regression comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub n_max: usize,
    #[serde(default)]
    pub b_rule: BWeightRule,
    #[serde(default = "default_true")]
    pub corrected_sign: bool,
}

fn default_true() -> bool {
    true
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self { n_max: 12, b_rule: BWeightRule::Pow2, corrected_sign: true }
    }
}

impl CounterexampleSpec {
    pub fn new(n_max: usize, b_rule: BWeightRule, corrected_sign: bool) -> Result<Self, KernelError> {
        if n_max == 0 {
            return Err(KernelError::ComponentOutOfRange { n: 0, n_max });
        }
        b_rule.validate()?;
        Ok(Self { n_max, b_rule, corrected_sign })
    }

    /// Band boundary `a_n = 1 - 2^{-n}`, strictly increasing in [0, 1).
    pub fn a(n: usize) -> f64 {
        1.0 - (0.5f64).powi(n as i32)
    }

    pub fn b(&self, n: usize) -> f64 {
        self.b_rule.weight(n)
    }

    /// The component integrand `κ_n(t, v)`:
    ///
    /// ```text
    /// κ_n(t, v) = b_n · 1[a_n <= v <= a_{n+1}]
    ///           · ( 1[v <= t] - σ · 2^{2n+3} · (t - a_{n+1})_+ · (1 - v) )
    /// ```
    ///
    /// with `σ = +1` under the corrected sign. This closed form follows from
    /// rewriting the time-integral term by interchanging the order of
    /// integration: `∫_{a_n}^1 (B_{s∧a_{n+1}} - B_{a_n}) ds
    /// = ∫_{a_n}^{a_{n+1}} (1 - v) dB_v`. Zero for `v > t` (adaptedness).
    pub fn component_kernel(&self, n: usize, t: f64, v: f64) -> Result<f64, KernelError> {
        if n >= self.n_max {
            return Err(KernelError::ComponentOutOfRange { n, n_max: self.n_max });
        }
        if !t.is_finite() || !v.is_finite() {
            return Err(KernelError::NonFinite(if t.is_finite() { v } else { t }));
        }
        Ok(self.component_kernel_unchecked(n, t, v))
    }

    #[inline]
    pub(crate) fn component_kernel_unchecked(&self, n: usize, t: f64, v: f64) -> f64 {
        if v > t {
            return 0.0;
        }
        let (an, an1) = (Self::a(n), Self::a(n + 1));
        if v < an || v > an1 {
            return 0.0;
        }
        let step = if v <= t { 1.0 } else { 0.0 };
        let sigma = if self.corrected_sign { 1.0 } else { -1.0 };
        let coeff = (2.0f64).powi(2 * n as i32 + 3);
        self.b(n) * (step - sigma * coeff * (t - an1).max(0.0) * (1.0 - v))
    }

    /// The scalar bracket `1 - 2^{2n+3} ∫_{a_{n+1}}^1 (s - a_{n+1}) ds`.
    /// Exactly zero in floating point for every `n` (all terms are powers
    /// of two).
    pub fn bracket_identity(n: usize) -> f64 {
        let an1 = Self::a(n + 1);
        let integral = (1.0 - an1) * (1.0 - an1) / 2.0;
        1.0 - (2.0f64).powi(2 * n as i32 + 3) * integral
    }

    /// Suggested driver resolution for direct simulation: fine enough to
    /// place every band boundary `a_0 .. a_{n_max}` on a driver node.
    pub fn driver_step(&self, requested: f64) -> f64 {
        let narrowest = (0.5f64).powi(self.n_max as i32);
        requested.min(narrowest).max(1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)] // 1.414214 is the frozen example value
    fn eval_matches_hand_values() {
        let bm = MovingAverageKernel::brownian();
        assert_eq!(bm.eval(-1.0).unwrap(), 1.0);
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        assert_eq!(ind.eval(0.5).unwrap(), 0.0);
        // scalar power-function oracle: (-(-4))^{0.75-0.5} = 4^{1/4} = sqrt 2
        let fbm = MovingAverageKernel::fbm(0.75).unwrap();
        let expected = 4.0f64.powf(0.25);
        assert_abs_diff_eq!(fbm.eval(-4.0).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 1.414214, epsilon = 1e-6);
    }

    #[test]
    fn eval_is_exactly_zero_on_nonnegative_axis() {
        let kernels = [
            MovingAverageKernel::fbm(0.25).unwrap(),
            MovingAverageKernel::brownian(),
            MovingAverageKernel::indicator(2.0).unwrap(),
            MovingAverageKernel::tabulated(vec![-2.0, -1.0, -0.5], vec![0.3, 1.0, 0.2]).unwrap(),
        ];
        for k in &kernels {
            for x in [0.0, 1e-300, 0.5, 7.0] {
                assert_eq!(k.eval(x).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn increment_hand_values() {
        let bm = MovingAverageKernel::brownian();
        assert_eq!(bm.increment(1.0, 0.5).unwrap(), 1.0);
        assert_eq!(bm.increment(1.0, -3.0).unwrap(), 0.0);
        // f(-1.25) - f(-0.75) = 0 - 1 for the unit indicator
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        assert_eq!(ind.increment(0.5, -0.75).unwrap(), -1.0);
    }

    #[test]
    fn increment_stable_formula_matches_naive_midrange() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        for &s in &[-0.3, -1.0, -7.5] {
            let naive = k.eval(s - 1.0).unwrap() - k.eval(s).unwrap();
            assert_abs_diff_eq!(k.increment(1.0, s).unwrap(), naive, epsilon = 1e-12);
        }
        // far past: the stable form stays accurate where the naive difference
        // loses all significant digits
        let far = k.increment(1.0, -1e12).unwrap();
        let a = 0.25f64;
        let approx_tail = a * 1.0 * (1e12f64).powf(a - 1.0);
        assert_abs_diff_eq!(far, approx_tail, epsilon = approx_tail * 1e-3);
    }

    #[test]
    fn tabulated_interpolates_and_vanishes_outside() {
        let k = MovingAverageKernel::tabulated(vec![-2.0, -1.0], vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(k.eval(-1.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(k.eval(-3.0).unwrap(), 0.0);
        assert_eq!(k.eval(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_csv_roundtrip_with_header() {
        let csv = "x,f\n-2.0,0.0\n-1.0,1.0\n";
        let k = MovingAverageKernel::tabulated_from_csv(csv.as_bytes()).unwrap();
        assert_abs_diff_eq!(k.eval(-1.5).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(MovingAverageKernel::fbm(1.5).is_err());
        assert!(MovingAverageKernel::fbm(0.0).is_err());
        assert!(MovingAverageKernel::indicator(-1.0).is_err());
        assert!(MovingAverageKernel::tabulated(vec![-1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(MovingAverageKernel::tabulated(vec![-1.0, -2.0], vec![1.0, 1.0]).is_err());
        let k = MovingAverageKernel::brownian();
        assert!(k.eval(f64::NAN).is_err());
    }

    #[test]
    fn tail_bound_hand_values() {
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        assert_eq!(ind.tail_bound(1.0, 3.0).unwrap(), 0.0);
        let bm = MovingAverageKernel::brownian();
        assert_eq!(bm.tail_bound(5.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn tail_bound_fbm_bounds_the_numeric_tail_and_decreases() {
        // numerical quadrature oracle on doubling slices [-2^k L, -L]
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let t = 1.0;
        let l = 100.0;
        let mut numeric = 0.0;
        let mut lo = l;
        for _ in 0..24 {
            numeric += k.increment_sq_slice(t, -2.0 * lo, -lo);
            lo *= 2.0;
        }
        let bound = k.tail_bound(t, l).unwrap();
        assert!(bound >= numeric, "bound {bound} below numeric tail {numeric}");
        assert!(bound <= 2.0 * numeric, "bound {bound} is not tight vs {numeric}");
        // closed form for H = 3/4: a^2 t^2 L^{-1/2} / (1/2) = 0.0125 at L = 100
        assert_abs_diff_eq!(bound, 0.0125, epsilon = 1e-12);
        let mut prev = bound;
        for &bigger in &[200.0, 400.0, 800.0] {
            let b = k.tail_bound(t, bigger).unwrap();
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn validate_reports_convergence() {
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let d = k.validate(&[0.5, 1.0], 1e-5).unwrap();
        assert!(d.nondegenerate);
        assert!(d.tail_converged, "doubling delta {}", d.max_doubling_delta);
        let ind = MovingAverageKernel::indicator(1.0).unwrap();
        let d = ind.validate(&[1.0], 1e-12).unwrap();
        assert!(d.tail_converged);
    }

    #[test]
    fn two_sided_split_is_adapted_and_bm_has_no_history() {
        let bm = TwoSidedKernel::new(MovingAverageKernel::brownian(), &[0.5, 1.0], 10.0).unwrap();
        assert_eq!(bm.fresh(0.5, 0.7), 0.0);
        for s in [-5.0, -1.0, -0.01, 0.0] {
            assert_eq!(bm.history(1.0, s), 0.0);
        }
        assert_eq!(bm.tail_error_bound(), 0.0);

        let fbm = TwoSidedKernel::new(MovingAverageKernel::fbm(0.75).unwrap(), &[1.0], 1e6).unwrap();
        assert!(fbm.tail_error_bound() > 0.0);
        // closed form: 0.0625 * (1e6)^{-1/2} / 0.5 = 1.25e-4
        assert_abs_diff_eq!(fbm.tail_error_bound(), 1.25e-4, epsilon = 1e-12);
    }

    #[test]
    fn counterexample_band_boundaries_increase() {
        let mut prev = -1.0;
        for n in 0..=16 {
            let a = CounterexampleSpec::a(n);
            assert!(a > prev && a < 1.0);
            prev = a;
        }
        assert_eq!(CounterexampleSpec::a(0), 0.0);
    }

    #[test]
    fn counterexample_kernel_hand_values() {
        let spec = CounterexampleSpec::new(4, BWeightRule::Constant { value: 1.0 }, true).unwrap();
        // 1 - 8 * (1 - a_1) * (1 - 0.25) = 1 - 8 * 0.5 * 0.75 = -2
        assert_abs_diff_eq!(spec.component_kernel(0, 1.0, 0.25).unwrap(), -2.0, epsilon = 1e-14);
        // adaptedness
        assert_eq!(spec.component_kernel(1, 0.3, 0.6).unwrap(), 0.0);
        // before a_{n+1} the drift term is off
        assert_abs_diff_eq!(spec.component_kernel(0, 0.25, 0.1).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bracket_identity_is_exact_for_all_components() {
        for n in 0..=12 {
            assert_eq!(CounterexampleSpec::bracket_identity(n), 0.0, "component {n}");
        }
    }

    #[test]
    fn component_kernel_time_integral_vanishes_under_corrected_sign() {
        // ∫_0^1 κ_n(t, v) dt = 0 for v inside the band; midpoint quadrature in t
        let spec = CounterexampleSpec::default();
        let m = 1 << 16;
        let h = 1.0 / m as f64;
        for n in [0usize, 1, 3] {
            let v = 0.5 * (CounterexampleSpec::a(n) + CounterexampleSpec::a(n + 1));
            let mut acc = 0.0;
            for i in 0..m {
                let t = (i as f64 + 0.5) * h;
                acc += spec.component_kernel_unchecked(n, t, v);
            }
            acc *= h;
            assert!(acc.abs() < 1e-8, "component {n}: integral {acc}");
        }
    }

    #[test]
    fn uncorrected_sign_breaks_the_time_integral() {
        let spec = CounterexampleSpec::new(4, BWeightRule::Pow2, false).unwrap();
        let v = 0.25;
        let m = 1 << 14;
        let h = 1.0 / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            acc += spec.component_kernel_unchecked(0, (i as f64 + 0.5) * h, v);
        }
        acc *= h;
        // with "+" the bracket evaluates to 2, so the integral is 2 (1 - v) b_0
        assert_abs_diff_eq!(acc, 2.0 * (1.0 - v), epsilon = 1e-3);
    }

    proptest! {
        #[test]
        fn increment_vanishes_beyond_t(t in 0.0f64..4.0, ds in 1e-12f64..10.0) {
            let kernels = [
                MovingAverageKernel::fbm(0.3).unwrap(),
                MovingAverageKernel::fbm(0.75).unwrap(),
                MovingAverageKernel::brownian(),
                MovingAverageKernel::indicator(1.3).unwrap(),
            ];
            for k in &kernels {
                prop_assert_eq!(k.increment(t, t + ds).unwrap(), 0.0);
            }
        }

        #[test]
        fn bm_increment_is_unit_indicator_of_0_t(t in 0.01f64..4.0, frac in 0.001f64..0.999) {
            let bm = MovingAverageKernel::brownian();
            let inside = t * frac;
            prop_assert_eq!(bm.increment(t, inside).unwrap(), 1.0);
            prop_assert_eq!(bm.increment(t, -inside).unwrap(), 0.0);
        }
    }
}
