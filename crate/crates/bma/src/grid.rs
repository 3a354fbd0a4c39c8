//! Finite time grids `t_0 < t_1 < ... < t_N` with `t_0 ≥ 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must contain at least one time")]
    Empty,
    #[error("grid times must be finite, got {0} at index {1}")]
    NonFinite(f64, usize),
    #[error("grid times must be strictly increasing, violated at index {0}")]
    NotIncreasing(usize),
    #[error("grid must start at t0 >= 0, got {0}")]
    NegativeStart(f64),
    #[error("uniform grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
}

/// Strictly increasing, finite, nonempty list of observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    times: Vec<f64>,
}

impl Grid {
    pub fn new(times: Vec<f64>) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(GridError::NonFinite(t, i));
            }
        }
        if times[0] < 0.0 {
            return Err(GridError::NegativeStart(times[0]));
        }
        for i in 1..times.len() {
            if times[i] <= times[i - 1] {
                return Err(GridError::NotIncreasing(i));
            }
        }
        Ok(Self { times })
    }

    /// Uniform grid `{0, T/(n-1), ..., T}` with `n` points.
    pub fn uniform(t_max: f64, n_points: usize) -> Result<Self, GridError> {
        if n_points < 2 {
            return Err(GridError::TooFewPoints(n_points));
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(GridError::NonFinite(t_max, n_points - 1));
        }
        let h = t_max / (n_points - 1) as f64;
        let mut times: Vec<f64> = (0..n_points).map(|i| i as f64 * h).collect();
        times[n_points - 1] = t_max;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Final time `T = t_N`.
    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Smallest spacing between consecutive grid times.
    pub fn min_spacing(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid quadrature weights for `∫_{t_0}^{t_N} x(t) dt` on this grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.times.len();
        let mut w = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let h = self.times[i + 1] - self.times[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = GridError;
    fn try_from(v: Vec<f64>) -> Result<Self, GridError> {
        Grid::new(v)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Vec<f64> {
        g.times
    }
}
