//! Run configuration: one structured TOML file, every field defaulted and
//! documented, unknown keys rejected. Command-line flags override file
//! values; `BMA_OUTPUT_DIR` and `BMA_THREADS` are the only environment
//! overrides.

use serde::{Deserialize, Serialize};

use bma::covariance::{GramMode, GramOptions};
use bma::kernel::{BWeightRule, CounterexampleSpec, KernelFamily, MovingAverageKernel};
use bma::Grid;

use crate::error::CliError;

fn d_format_version() -> u32 {
    1
}
fn d_seed() -> u64 {
    42
}
fn d_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_format_version")]
    pub format_version: u32,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub tube: TubeConfig,
    #[serde(default)]
    pub cfs: CfsConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    #[serde(default)]
    pub deconv: DeconvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config must parse to defaults")
    }
}

/// Process family: `fbm` (needs `hurst`), `indicator` (needs `width`),
/// `tabulated` (needs `csv`), or `counterexample` (dyadic-band process on
/// [0, 1]; `n_max`, `b_ratio`, `corrected_sign`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessConfig {
    pub kind: String,
    pub hurst: Option<f64>,
    pub width: Option<f64>,
    pub csv: Option<String>,
    /// Positive multiplier applied to the kernel.
    pub scale: Option<f64>,
    /// Truncation hint override for quadrature over the infinite past.
    pub truncation_hint: Option<f64>,
    pub n_max: Option<usize>,
    pub b_ratio: Option<f64>,
    pub corrected_sign: Option<bool>,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            kind: "fbm".into(),
            hurst: Some(0.5),
            width: None,
            csv: None,
            scale: None,
            truncation_hint: None,
            n_max: None,
            b_ratio: None,
            corrected_sign: None,
        }
    }
}

/// Either the process kernel or the counterexample spec.
#[derive(Debug)]
pub enum Process {
    Kernel(MovingAverageKernel),
    Counterexample(CounterexampleSpec),
}

impl ProcessConfig {
    pub fn build(&self) -> Result<Process, CliError> {
        let scale = self.scale.unwrap_or(1.0);
        match self.kind.as_str() {
            "fbm" => {
                let h = self
                    .hurst
                    .ok_or_else(|| CliError::validation("process.hurst", "fbm requires hurst"))?;
                if !(h.is_finite() && h > 0.0 && h < 1.0) {
                    return Err(CliError::validation(
                        "process.hurst",
                        format!("hurst must lie in (0, 1), got {h}"),
                    ));
                }
                let k = MovingAverageKernel::new(
                    KernelFamily::Fbm { hurst: h },
                    scale,
                    self.truncation_hint,
                )
                .map_err(|e| CliError::validation("process", e.to_string()))?;
                Ok(Process::Kernel(k))
            }
            "indicator" => {
                let w = self.width.ok_or_else(|| {
                    CliError::validation("process.width", "indicator requires width")
                })?;
                let k = MovingAverageKernel::new(
                    KernelFamily::Indicator { width: w },
                    scale,
                    self.truncation_hint,
                )
                .map_err(|e| CliError::validation("process.width", e.to_string()))?;
                Ok(Process::Kernel(k))
            }
            "tabulated" => {
                let path = self.csv.as_ref().ok_or_else(|| {
                    CliError::validation("process.csv", "tabulated requires a csv path")
                })?;
                let file = std::fs::File::open(path).map_err(|e| {
                    CliError::validation("process.csv", format!("cannot open {path}: {e}"))
                })?;
                let k = MovingAverageKernel::tabulated_from_csv(file)
                    .map_err(|e| CliError::validation("process.csv", e.to_string()))?
                    .with_scale(scale)
                    .map_err(|e| CliError::validation("process.scale", e.to_string()))?;
                Ok(Process::Kernel(k))
            }
            "counterexample" => {
                let n_max = self.n_max.unwrap_or(12);
                let rule = match self.b_ratio {
                    None => BWeightRule::Pow2,
                    Some(r) => BWeightRule::Geometric { ratio: r },
                };
                let spec =
                    CounterexampleSpec::new(n_max, rule, self.corrected_sign.unwrap_or(true))
                        .map_err(|e| CliError::validation("process", e.to_string()))?;
                Ok(Process::Counterexample(spec))
            }
            other => Err(CliError::validation(
                "process.kind",
                format!("unknown kind '{other}' (expected fbm | indicator | tabulated | counterexample)"),
            )),
        }
    }
}

/// Uniform grid `{0, ..., t_max}` with `points` entries, or explicit
/// `times` (strictly increasing, first >= 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub t_max: f64,
    pub points: usize,
    #[serde(default)]
    pub times: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_max: 1.0, points: 33, times: Vec::new() }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, CliError> {
        if self.times.is_empty() {
            Grid::uniform(self.t_max, self.points)
                .map_err(|e| CliError::validation("grid", e.to_string()))
        } else {
            Grid::new(self.times.clone()).map_err(|e| CliError::validation("grid.times", e.to_string()))
        }
    }
}

/// Quadrature and validation settings. Zeros mean "use the documented
/// default" (`l = max(100 T, kernel hint)`, `quad_step = spacing / 64`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub l: f64,
    pub quad_step: f64,
    pub normalize: bool,
    pub convergence_tol: f64,
    pub max_refinements: usize,
    pub tail_cap: f64,
    /// "full" or "fresh".
    pub mode: String,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            l: 0.0,
            quad_step: 0.0,
            normalize: false,
            convergence_tol: 1e-6,
            max_refinements: 3,
            tail_cap: 0.0,
            mode: "full".into(),
        }
    }
}

impl NumericsConfig {
    pub fn gram_options(&self) -> Result<GramOptions, CliError> {
        let mode = match self.mode.as_str() {
            "full" => GramMode::Full,
            "fresh" => GramMode::Fresh,
            other => {
                return Err(CliError::validation(
                    "numerics.mode",
                    format!("unknown mode '{other}' (expected full | fresh)"),
                ))
            }
        };
        Ok(GramOptions {
            mode,
            l: if self.l > 0.0 { Some(self.l) } else { None },
            quad_step: if self.quad_step > 0.0 { Some(self.quad_step) } else { None },
            normalize: self.normalize,
            convergence_tol: self.convergence_tol,
            max_refinements: self.max_refinements,
            tail_cap: if self.tail_cap > 0.0 { Some(self.tail_cap) } else { None },
            psd_tol: 1e-8,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_paths: usize,
    /// "cholesky" (exact, through the Gram factor) or "direct" (Riemann
    /// sum of the defining integral).
    pub method: String,
    /// Driver substeps per grid interval for the direct method.
    pub substeps: usize,
    /// Past truncation for the direct method.
    pub sim_l: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_paths: 1000, method: "cholesky".into(), substeps: 16, sim_l: 16.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeConfig {
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    /// Optional CSV column with the target path `psi` on the grid
    /// (defaults to the zero path).
    pub target_csv: Option<String>,
}

impl Default for TubeConfig {
    fn default() -> Self {
        Self { epsilons: vec![0.25, 0.5, 1.0], n_paths: 100_000, target_csv: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CfsConfig {
    /// Optional CSV column of extra functional weights to scan.
    pub weights_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    /// Grid sizes of the refinement ladder.
    pub resolutions: Vec<usize>,
    /// Also evaluate the uncorrected (published-sign) variant.
    pub compare_uncorrected: bool,
    /// Grid size used for the uncorrected comparison.
    pub uncorrected_points: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![64, 128, 256, 512, 1024, 2048, 4096],
            compare_uncorrected: true,
            uncorrected_points: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeconvConfig {
    /// Kernel: "one" (h = 1), "gap:<depth>" (h = 0 on (-depth, 0], 1
    /// below), or "csv:<path>" (depth-indexed column, h[j] = h(-j delta)).
    pub h: String,
    /// Target: "t", "t2", "t_sin_pi_t", or "csv:<path>".
    pub phi: String,
    /// Step is `t_max * 2^-delta_exp`.
    pub delta_exp: u32,
    pub t_max: f64,
    /// Explicit ladder; empty means the default decade ladder plus 0.
    #[serde(default)]
    pub lambdas: Vec<f64>,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        Self { h: "one".into(), phi: "t".into(), delta_exp: 9, t_max: 1.0, lambdas: Vec::new() }
    }
}

pub fn load_config(path: Option<&str>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation("config", format!("cannot read {p}: {e}"))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::validation("config", format!("parse error: {e}")))?
        }
    };
    if cfg.format_version != 1 {
        return Err(CliError::validation(
            "format_version",
            format!("unsupported format_version {}", cfg.format_version),
        ));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_documented_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.seed, 42);
        assert_eq!(c.grid.points, 33);
        assert_eq!(c.simulate.method, "cholesky");
        assert_eq!(c.counterexample.resolutions.first(), Some(&64));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("nonsense = 1").unwrap_err();
        assert!(err.to_string().contains("nonsense"));
        let err = toml::from_str::<RunConfig>("[process]\nkind = \"fbm\"\nhurts = 0.5").unwrap_err();
        assert!(err.to_string().contains("hurts"));
    }

    #[test]
    fn invalid_hurst_names_the_field() {
        let cfg: RunConfig = toml::from_str("[process]\nkind = \"fbm\"\nhurst = 1.5").unwrap();
        let err = cfg.process.build().unwrap_err();
        let json = err.to_json();
        assert!(json.contains("process.hurst"), "{json}");
    }
}
