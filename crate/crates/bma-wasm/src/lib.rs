//! Browser demo bindings: three interactive operations over the core
//! library, each taking a JSON request string and returning a JSON
//! response string. The static page in `www/` drives them with sliders
//! and draws the results on canvases.
//!
//! Build with `wasm-pack build --target web` (or `cargo build --target
//! wasm32-unknown-unknown` plus `wasm-bindgen`); see the crate README.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use bma::cfs;
use bma::covariance::{self, GramOptions};
use bma::deconv;
use bma::gaussian::{self, GaussianVector, SimTarget};
use bma::kernel::{CounterexampleSpec, MovingAverageKernel};
use bma::Grid;

fn err_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[derive(Deserialize)]
struct PathsRequest {
    /// "bm" | "fbm" | "indicator" | "counterexample"
    family: String,
    #[serde(default = "default_hurst")]
    hurst: f64,
    #[serde(default = "default_width")]
    width: f64,
    #[serde(default = "default_points")]
    n_points: usize,
    #[serde(default = "default_tmax")]
    t_max: f64,
    #[serde(default = "default_paths")]
    n_paths: usize,
    #[serde(default)]
    seed: u64,
}

fn default_hurst() -> f64 {
    0.75
}
fn default_width() -> f64 {
    1.0
}
fn default_points() -> usize {
    129
}
fn default_tmax() -> f64 {
    1.0
}
fn default_paths() -> usize {
    12
}

#[derive(Serialize)]
struct PathsResponse {
    times: Vec<f64>,
    paths: Vec<Vec<f64>>,
    cond_variances: Vec<f64>,
    grid_verdict: bool,
}

fn build_gram_for(family: &str, hurst: f64, width: f64, grid: &Grid) -> Result<covariance::GramMatrix, String> {
    match family {
        "bm" => covariance::GramMatrix::fbm_closed(grid, 0.5).map_err(|e| e.to_string()),
        "fbm" => {
            let k = MovingAverageKernel::fbm(hurst).map_err(|e| e.to_string())?;
            // keep the demo snappy: coarser quadrature than the CLI default
            let opts = GramOptions {
                quad_step: Some(grid.min_spacing() / 8.0),
                convergence_tol: 1e-4,
                ..GramOptions::normalized()
            };
            covariance::gram(&k, grid, &opts).map_err(|e| e.to_string())
        }
        "indicator" => {
            let k = MovingAverageKernel::indicator(width).map_err(|e| e.to_string())?;
            let opts = GramOptions {
                quad_step: Some(grid.min_spacing() / 8.0),
                convergence_tol: 1e-4,
                ..GramOptions::default()
            };
            covariance::gram(&k, grid, &opts).map_err(|e| e.to_string())
        }
        "counterexample" => {
            let spec = CounterexampleSpec::default();
            covariance::counterexample_gram(&spec, grid).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown family '{other}'")),
    }
}

/// Simulate an ensemble of paths and report the conditional increment
/// variances of the underlying covariance.
#[wasm_bindgen]
pub fn simulate_paths(request: &str) -> String {
    let req: PathsRequest = match serde_json::from_str(request) {
        Ok(r) => r,
        Err(e) => return err_json(&e.to_string()),
    };
    let n_points = req.n_points.clamp(2, 1025);
    let n_paths = req.n_paths.clamp(1, 64);
    let t_max = if req.family == "counterexample" { 1.0 } else { req.t_max };
    let grid = match Grid::uniform(t_max, n_points) {
        Ok(g) => g,
        Err(e) => return err_json(&e.to_string()),
    };
    let run = || -> Result<PathsResponse, String> {
        let gram = build_gram_for(&req.family, req.hurst, req.width, &grid)?;
        let vars = cfs::increment_conditional_variances(&gram).map_err(|e| e.to_string())?;
        let tau = cfs::cfs_tau(&gram);
        let verdict = vars.iter().all(|&v| v > tau);
        let ens = if req.family == "counterexample" {
            let spec = CounterexampleSpec::default();
            gaussian::direct_simulate(SimTarget::Counterexample(&spec), &grid, n_paths, req.seed, 4, 0.0)
                .map_err(|e| e.to_string())?
        } else {
            let gv = GaussianVector::zero_mean(gram);
            gaussian::sample(&gv, n_paths, req.seed).map_err(|e| e.to_string())?
        };
        Ok(PathsResponse {
            times: grid.times().to_vec(),
            paths: ens.rows().map(|r| r.to_vec()).collect(),
            cond_variances: vars,
            grid_verdict: verdict,
        })
    };
    match run() {
        Ok(resp) => serde_json::to_string(&resp).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}

#[derive(Deserialize)]
struct ScanRequest {
    #[serde(default = "default_scan_resolutions")]
    resolutions: Vec<usize>,
    #[serde(default = "default_true")]
    corrected_sign: bool,
    #[serde(default = "default_nmax")]
    n_max: usize,
}

fn default_scan_resolutions() -> Vec<usize> {
    vec![32, 64, 128, 256, 512]
}
fn default_true() -> bool {
    true
}
fn default_nmax() -> usize {
    12
}

#[derive(Serialize)]
struct ScanRow {
    points: usize,
    grid_verdict: bool,
    min_cond_variance: f64,
    trapezoid_variance: f64,
    ratio_to_var1: f64,
}

#[derive(Serialize)]
struct ScanResponse {
    rows: Vec<ScanRow>,
    var_x1: f64,
    caveat: String,
}

/// Counterexample explorer: verdicts and integral-functional variances
/// across a resolution ladder.
#[wasm_bindgen]
pub fn counterexample_scan(request: &str) -> String {
    let req: ScanRequest = match serde_json::from_str(request) {
        Ok(r) => r,
        Err(e) => return err_json(&e.to_string()),
    };
    let spec = CounterexampleSpec {
        n_max: req.n_max.clamp(1, 16),
        corrected_sign: req.corrected_sign,
        ..Default::default()
    };
    let run = || -> Result<ScanResponse, String> {
        let mut rows = Vec::new();
        let mut var1 = 0.0;
        for &points in &req.resolutions {
            let points = points.clamp(4, 1024);
            let grid = Grid::uniform(1.0, points).map_err(|e| e.to_string())?;
            let gram = covariance::counterexample_gram(&spec, &grid).map_err(|e| e.to_string())?;
            let vars = cfs::increment_conditional_variances(&gram).map_err(|e| e.to_string())?;
            let tau = cfs::cfs_tau(&gram);
            let trap = grid.trapezoid_weights();
            let tv = cfs::functional_variance(&gram, &trap).map_err(|e| e.to_string())?;
            var1 = gram.var(gram.n() - 1);
            rows.push(ScanRow {
                points,
                grid_verdict: vars.iter().all(|&v| v > tau),
                min_cond_variance: vars.iter().cloned().fold(f64::INFINITY, f64::min),
                trapezoid_variance: tv,
                ratio_to_var1: tv / var1,
            });
        }
        Ok(ScanResponse { rows, var_x1: var1, caveat: cfs::CONTINUITY_CAVEAT.to_string() })
    };
    match run() {
        Ok(resp) => serde_json::to_string(&resp).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}

#[derive(Deserialize)]
struct DeconvRequest {
    /// Vanishing depth of h near 0 (0 = no gap).
    #[serde(default)]
    gap: f64,
    /// "t" | "t2" | "t_sin_pi_t"
    #[serde(default = "default_phi")]
    phi: String,
    #[serde(default = "default_delta_exp")]
    delta_exp: u32,
    /// log10 of the regularization weight; values <= -12 mean lambda = 0.
    #[serde(default = "default_log_lambda")]
    log10_lambda: f64,
}

fn default_phi() -> String {
    "t".into()
}
fn default_delta_exp() -> u32 {
    7
}
fn default_log_lambda() -> f64 {
    -8.0
}

#[derive(Serialize)]
struct DeconvResponse {
    times: Vec<f64>,
    phi: Vec<f64>,
    conv: Vec<f64>,
    g: Vec<f64>,
    sup_error: f64,
    edge_h: f64,
    lambda: f64,
}

/// Volterra deconvolution demo: approximate a target by `h * g`, with an
/// adjustable vanishing gap of `h` near zero showing the irreducible
/// residual forced by the support edge.
#[wasm_bindgen]
pub fn deconvolve_demo(request: &str) -> String {
    let req: DeconvRequest = match serde_json::from_str(request) {
        Ok(r) => r,
        Err(e) => return err_json(&e.to_string()),
    };
    let exp = req.delta_exp.clamp(4, 10);
    let n = 1usize << exp;
    let delta = 1.0 / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * delta).collect();
    let gap = req.gap.clamp(0.0, 0.9);
    let edge = (gap / delta).round() as usize;
    let h: Vec<f64> = (0..=n).map(|j| if j >= edge.max(1) { 1.0 } else { 0.0 }).collect();
    let phi: Vec<f64> = match req.phi.as_str() {
        "t" => nodes.clone(),
        "t2" => nodes.iter().map(|t| t * t).collect(),
        "t_sin_pi_t" => nodes.iter().map(|t| t * (std::f64::consts::PI * t).sin()).collect(),
        other => return err_json(&format!("unknown phi '{other}'")),
    };
    let lambda = if req.log10_lambda <= -12.0 { 0.0 } else { 10f64.powf(req.log10_lambda) };
    match deconv::deconv_solve(&h, &phi, delta, lambda) {
        Ok(r) => serde_json::to_string(&DeconvResponse {
            times: nodes,
            phi,
            conv: r.conv,
            g: r.g,
            sup_error: r.sup_error,
            edge_h: r.edge_h,
            lambda: r.lambda,
        })
        .unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e.to_string()),
    }
}
