//! Composite midpoint quadrature with segment knots, geometric refinement
//! near integrable power-law singularities, and geometrically growing
//! far-field panels for slowly decaying tails.
//!
//! Midpoint is used everywhere so the integrand is never evaluated at a
//! singular point itself. Near a singular endpoint the last stretch of the
//! segment is split into geometrically shrinking cells, each integrated with
//! its own midpoint rule; plain halving of cells alone converges too slowly
//! for integrands like `x^{-1/2}`, so every cell also carries a fixed number
//! of interior substeps.

/// Number of geometrically shrinking cells stacked against a singular
/// endpoint. The innermost remainder has width `window * 2^-LEVELS`.
const REFINE_LEVELS: u32 = 50;
/// Midpoint substeps inside each geometric cell.
const REFINE_SUBSTEPS: usize = 96;
/// The refined window covers this many base substeps.
const REFINE_WINDOW_STEPS: f64 = 64.0;
/// Substep cap inside a far-field panel.
const FAR_SUBSTEPS: usize = 512;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub a: f64,
    pub b: f64,
    /// Target substep width; the actual count is rounded up.
    pub step: f64,
    /// Cap on the substep count (far-field panels stay coarse).
    pub max_substeps: usize,
    pub refine_left: bool,
    pub refine_right: bool,
}

/// Kahan-compensated accumulator.
#[derive(Default)]
struct Acc {
    sum: f64,
    c: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

fn plain_midpoint<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize, acc: &mut Acc) {
    let h = (b - a) / n as f64;
    for i in 0..n {
        let x = a + (i as f64 + 0.5) * h;
        acc.add(f(x) * h);
    }
}

/// Geometric cells shrinking toward `target` (one endpoint of `[a, b]`).
fn refined_endpoint<F: Fn(f64) -> f64>(f: &F, near: f64, far: f64, acc: &mut Acc) {
    // Integrates the window between `far` and `near` where `near` is the
    // singular endpoint. Cells halve in width toward `near`, stopping when
    // the midpoints are no longer representable strictly between.
    let mut outer = far;
    for _ in 0..REFINE_LEVELS {
        let inner = near + (outer - near) * 0.5;
        if inner == near || inner == outer {
            return;
        }
        plain_midpoint(f, outer.min(inner), outer.max(inner), REFINE_SUBSTEPS, acc);
        outer = inner;
    }
    // innermost remainder: a single midpoint cell
    let width = (outer - near).abs();
    let mid = near + (outer - near) * 0.5;
    if width > 0.0 && mid != near {
        acc.add(f(mid) * width);
    }
}

pub(crate) fn integrate_segments<F: Fn(f64) -> f64>(f: &F, segments: &[Segment]) -> f64 {
    let mut acc = Acc::default();
    for seg in segments {
        let len = seg.b - seg.a;
        if len <= 0.0 {
            continue;
        }
        let n = ((len / seg.step).ceil() as usize).clamp(1, seg.max_substeps);
        let h = len / n as f64;
        let window = (REFINE_WINDOW_STEPS * h).min(if seg.refine_left && seg.refine_right {
            0.5 * len
        } else {
            len
        });
        let core_a = if seg.refine_left { seg.a + window } else { seg.a };
        let core_b = if seg.refine_right { seg.b - window } else { seg.b };
        if seg.refine_left {
            refined_endpoint(f, seg.a, core_a, &mut acc);
        }
        if core_b > core_a {
            let m = (((core_b - core_a) / seg.step).ceil() as usize).clamp(1, seg.max_substeps);
            plain_midpoint(f, core_a, core_b, m, &mut acc);
        }
        if seg.refine_right {
            refined_endpoint(f, seg.b, core_b, &mut acc);
        }
    }
    acc.sum
}

/// Builds the segment plan for `∫_lo^hi f`, splitting at `knots`, refining
/// at `singular` points, and coarsening geometrically below `-far_start`.
pub(crate) fn plan_segments(
    lo: f64,
    hi: f64,
    knots: &[f64],
    singular: &[f64],
    step: f64,
    far_start: f64,
) -> Vec<Segment> {
    if hi <= lo {
        return Vec::new();
    }
    // Scale-aware closeness: far-field cuts sit many orders of magnitude
    // below the near-field knots, so tolerances must be local, not global.
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    let mut cuts = vec![lo, hi];
    for &k in knots {
        if k > lo && k < hi && !close(k, lo) && !close(k, hi) {
            cuts.push(k);
        }
    }
    // far-field panel boundaries at -far_start * 2^k
    if far_start.is_finite() && lo < -far_start {
        let mut b = far_start;
        while -b > lo && !close(-b, lo) {
            if -b < hi && !close(-b, hi) {
                cuts.push(-b);
            }
            b *= 2.0;
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| close(*a, *b));

    let is_singular = |x: f64| singular.iter().any(|&s| close(s, x));
    cuts.windows(2)
        .map(|w| {
            let far = far_start.is_finite() && (w[1] < -far_start || close(w[1], -far_start));
            Segment {
                a: w[0],
                b: w[1],
                step,
                max_substeps: if far { FAR_SUBSTEPS } else { usize::MAX / 2 },
                refine_left: is_singular(w[0]),
                refine_right: is_singular(w[1]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, singular: &[f64], step: f64) -> f64 {
        let segs = plan_segments(lo, hi, &[], singular, step, f64::INFINITY);
        integrate_segments(&f, &segs)
    }

    #[test]
    fn polynomial_error_matches_midpoint_theory() {
        // composite midpoint on x^2: error = h^2/12, underestimating
        let v = quad(|x| x * x, 0.0, 1.0, &[], 1e-3);
        let theory = 1e-6 / 12.0;
        assert_abs_diff_eq!(1.0 / 3.0 - v, theory, epsilon = 1e-10);
    }

    #[test]
    fn inverse_sqrt_singularity_at_left_endpoint() {
        // ∫_0^1 x^{-1/2} dx = 2, singular at 0
        let v = quad(|x| 1.0 / x.sqrt(), 0.0, 1.0, &[0.0], 1e-3);
        assert_abs_diff_eq!(v, 2.0, epsilon = 5e-6);
    }

    #[test]
    fn inverse_sqrt_singularity_at_right_endpoint() {
        // ∫_0^1 (1-x)^{-1/2} dx = 2
        let v = quad(|x| 1.0 / (1.0 - x).sqrt(), 0.0, 1.0, &[1.0], 1e-3);
        assert_abs_diff_eq!(v, 2.0, epsilon = 5e-6);
    }

    #[test]
    fn far_field_panels_capture_slow_tails() {
        // ∫_{-L}^{-1} s^{-2} ds = 1 - 1/L
        let l = 1e9;
        let segs = plan_segments(-l, -1.0, &[], &[], 1e-3, 1.0);
        let v = integrate_segments(&|s: f64| 1.0 / (s * s), &segs);
        assert_abs_diff_eq!(v, 1.0 - 1.0 / l, epsilon = 2e-6);
        // panel count grows logarithmically, not linearly
        assert!(segs.len() < 64, "{} segments", segs.len());
    }

    #[test]
    fn knots_split_discontinuities_exactly() {
        // step function: exact once the jump is a knot
        let f = |x: f64| if x < 0.25 { 1.0 } else { 3.0 };
        let segs = plan_segments(0.0, 1.0, &[0.25], &[], 0.01, f64::INFINITY);
        let v = integrate_segments(&f, &segs);
        assert_abs_diff_eq!(v, 0.25 + 3.0 * 0.75, epsilon = 1e-12);
    }
}
