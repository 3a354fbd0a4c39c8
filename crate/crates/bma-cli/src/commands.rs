//! Subcommand implementations. Each run writes its artifacts into the
//! output directory and prints a one-line summary per artifact on stdout.

use std::path::{Path, PathBuf};

use serde::Serialize;

use bma::cfs::{self, ReportOptions};
use bma::covariance::{self, GramMatrix};
use bma::deconv::{self, LAMBDA_LADDER};
use bma::gaussian::{self, GaussianVector, SimTarget};
use bma::io;
use bma::kernel::CounterexampleSpec;
use bma::Grid;

use crate::config::{Process, RunConfig};
use crate::error::CliError;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::validation("output_dir", format!("cannot create {dir:?}: {e}")))?;
    Ok(dir)
}

fn build_gram(cfg: &RunConfig) -> Result<GramMatrix, CliError> {
    let grid = cfg.grid.build()?;
    match cfg.process.build()? {
        Process::Kernel(kernel) => {
            let opts = cfg.numerics.gram_options()?;
            Ok(covariance::gram(&kernel, &grid, &opts)?)
        }
        Process::Counterexample(spec) => {
            if cfg.numerics.normalize {
                return Err(CliError::validation(
                    "numerics.normalize",
                    "normalization applies to kernel processes only",
                ));
            }
            Ok(covariance::counterexample_gram(&spec, &grid)?)
        }
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn cmd_gram(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let gram = build_gram(cfg)?;
    let base = dir.join("gram");
    io::gram_to_files(&gram, &base)?;
    announce(&base.with_extension("csv"));
    announce(&base.with_extension("meta.json"));
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let grid = cfg.grid.build()?;
    let sim = &cfg.simulate;
    let ens = match sim.method.as_str() {
        "cholesky" => {
            let gram = build_gram(cfg)?;
            let gv = GaussianVector::zero_mean(gram);
            gaussian::sample(&gv, sim.n_paths, cfg.seed)?
        }
        "direct" => {
            let target = match cfg.process.build()? {
                Process::Kernel(ref k) => {
                    let k = k.clone();
                    return finish_simulate(cfg, &dir, gaussian::direct_simulate(
                        SimTarget::Kernel(&k),
                        &grid,
                        sim.n_paths,
                        cfg.seed,
                        sim.substeps,
                        sim.sim_l,
                    )?);
                }
                Process::Counterexample(spec) => gaussian::direct_simulate(
                    SimTarget::Counterexample(&spec),
                    &grid,
                    sim.n_paths,
                    cfg.seed,
                    sim.substeps,
                    sim.sim_l,
                )?,
            };
            target
        }
        other => {
            return Err(CliError::validation(
                "simulate.method",
                format!("unknown method '{other}' (expected cholesky | direct)"),
            ))
        }
    };
    finish_simulate(cfg, &dir, ens)
}

fn finish_simulate(
    _cfg: &RunConfig,
    dir: &Path,
    ens: bma::PathEnsemble,
) -> Result<(), CliError> {
    let base = dir.join("paths");
    io::ensemble_to_files(&ens, &base)?;
    announce(&base.with_extension("csv"));
    announce(&base.with_extension("meta.json"));
    Ok(())
}

pub fn cmd_check_cfs(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let gram = build_gram(cfg)?;
    let mut opts = ReportOptions::default();
    if let Some(path) = &cfg.cfs.weights_csv {
        let w = io::column_from_file(Path::new(path))?;
        opts.extra_weights.push((format!("csv:{path}"), w));
    }
    let report = cfs::build_report(&gram, &opts)?;
    let path = dir.join("cfs_report.json");
    io::write_json(&path, &report)?;
    announce(&path);
    println!(
        "grid_verdict = {}, min conditional variance = {} at increment {}",
        report.grid_verdict,
        io::fmt_f64(report.min_cond_variance.value),
        report.min_cond_variance.index
    );
    Ok(())
}

#[derive(Serialize)]
struct LadderRow {
    points: usize,
    grid_verdict: bool,
    min_cond_variance: f64,
    trapezoid_variance: f64,
    var_x1: f64,
    trapezoid_over_var_x1: f64,
}

#[derive(Serialize)]
struct UncorrectedComparison {
    points: usize,
    trapezoid_variance: f64,
    var_x1: f64,
    trapezoid_over_var_x1: f64,
}

#[derive(Serialize)]
struct CounterexampleSummary {
    format_version: u32,
    n_max: usize,
    corrected_sign: bool,
    rows: Vec<LadderRow>,
    /// `1 - 2^{2n+3} ∫_{a_{n+1}}^1 (s - a_{n+1}) ds` for n = 0..=n_max;
    /// exactly zero under the corrected sign convention.
    bracket_identities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    uncorrected: Option<UncorrectedComparison>,
    continuity_caveat: String,
}

fn ladder_row(spec: &CounterexampleSpec, points: usize) -> Result<LadderRow, CliError> {
    let grid = Grid::uniform(1.0, points)
        .map_err(|e| CliError::validation("counterexample.resolutions", e.to_string()))?;
    let gram = covariance::counterexample_gram(spec, &grid)?;
    let vars = cfs::increment_conditional_variances(&gram)?;
    let tau = cfs::cfs_tau(&gram);
    let min_v = vars.iter().cloned().fold(f64::INFINITY, f64::min);
    let trap = gram.grid().trapezoid_weights();
    let trap_var = cfs::functional_variance(&gram, &trap)?;
    let var_x1 = gram.var(gram.n() - 1);
    Ok(LadderRow {
        points,
        grid_verdict: vars.iter().all(|&v| v > tau),
        min_cond_variance: min_v,
        trapezoid_variance: trap_var,
        var_x1,
        trapezoid_over_var_x1: trap_var / var_x1,
    })
}

/// Full counterexample pipeline: Gram matrices on a refinement ladder,
/// conditional-variance verdicts, the integral-functional variance decay,
/// the exact per-component bracket identity, and the published-sign
/// comparison.
pub fn cmd_counterexample(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let spec = match cfg.process.build()? {
        Process::Counterexample(s) => s,
        Process::Kernel(_) => CounterexampleSpec::default(),
    };
    if cfg.counterexample.resolutions.is_empty() {
        return Err(CliError::validation("counterexample.resolutions", "ladder is empty"));
    }
    let mut rows = Vec::new();
    for &points in &cfg.counterexample.resolutions {
        rows.push(ladder_row(&spec, points)?);
    }
    let bracket_identities: Vec<f64> =
        (0..=spec.n_max).map(CounterexampleSpec::bracket_identity).collect();
    let uncorrected = if cfg.counterexample.compare_uncorrected {
        let unc = CounterexampleSpec { corrected_sign: false, ..spec.clone() };
        let points = cfg.counterexample.uncorrected_points;
        let grid = Grid::uniform(1.0, points)
            .map_err(|e| CliError::validation("counterexample.uncorrected_points", e.to_string()))?;
        let gram = covariance::counterexample_gram(&unc, &grid)?;
        let trap = gram.grid().trapezoid_weights();
        let trap_var = cfs::functional_variance(&gram, &trap)?;
        let var_x1 = gram.var(gram.n() - 1);
        Some(UncorrectedComparison {
            points,
            trapezoid_variance: trap_var,
            var_x1,
            trapezoid_over_var_x1: trap_var / var_x1,
        })
    } else {
        None
    };

    let summary = CounterexampleSummary {
        format_version: io::FORMAT_VERSION,
        n_max: spec.n_max,
        corrected_sign: spec.corrected_sign,
        rows,
        bracket_identities,
        uncorrected,
        continuity_caveat: cfs::CONTINUITY_CAVEAT.to_string(),
    };

    let json_path = dir.join("counterexample.json");
    io::write_json(&json_path, &summary)?;
    announce(&json_path);

    let mut csv = String::from("points,grid_verdict,min_cond_variance,trapezoid_variance,var_x1,trapezoid_over_var_x1\n");
    for r in &summary.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.points,
            r.grid_verdict,
            io::fmt_f64(r.min_cond_variance),
            io::fmt_f64(r.trapezoid_variance),
            io::fmt_f64(r.var_x1),
            io::fmt_f64(r.trapezoid_over_var_x1),
        ));
    }
    let csv_path = dir.join("counterexample.csv");
    io::write_text(&csv_path, &csv)?;
    announce(&csv_path);

    println!("points  verdict  min_cond_var    trap_var        trap/var(X_1)");
    for r in &summary.rows {
        println!(
            "{:<7} {:<8} {:<15.6e} {:<15.6e} {:<15.6e}",
            r.points, r.grid_verdict, r.min_cond_variance, r.trapezoid_variance, r.trapezoid_over_var_x1
        );
    }
    if let Some(u) = &summary.uncorrected {
        println!(
            "published-sign variant at {} points: trap_var = {:.6e} ({:.3} of Var(X_1))",
            u.points, u.trapezoid_variance, u.trapezoid_over_var_x1
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct DeconvArtifact {
    format_version: u32,
    delta: f64,
    t_max: f64,
    h_spec: String,
    phi_spec: String,
    ladder: Vec<LadderEntry>,
    best: deconv::DeconvResult,
}

#[derive(Serialize)]
struct LadderEntry {
    lambda: f64,
    sup_error: f64,
}

fn named_target(name: &str, nodes: &[f64]) -> Option<Vec<f64>> {
    let f: fn(f64) -> f64 = match name {
        "t" => |t| t,
        "t2" => |t| t * t,
        "t_sin_pi_t" => |t| t * (std::f64::consts::PI * t).sin(),
        _ => return None,
    };
    Some(nodes.iter().map(|&t| f(t)).collect())
}

pub fn cmd_deconvolve(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let dc = &cfg.deconv;
    if !(dc.t_max.is_finite() && dc.t_max > 0.0) {
        return Err(CliError::validation("deconv.t_max", format!("must be positive, got {}", dc.t_max)));
    }
    if dc.delta_exp == 0 || dc.delta_exp > 20 {
        return Err(CliError::validation("deconv.delta_exp", "must lie in 1..=20"));
    }
    let n = 1usize << dc.delta_exp;
    let delta = dc.t_max / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * delta).collect();

    let h: Vec<f64> = if dc.h == "one" {
        vec![1.0; n + 1]
    } else if let Some(depth) = dc.h.strip_prefix("gap:") {
        let depth: f64 = depth
            .parse()
            .map_err(|_| CliError::validation("deconv.h", format!("bad gap depth in '{}'", dc.h)))?;
        if !(0.0..dc.t_max).contains(&depth) {
            return Err(CliError::validation("deconv.h", "gap depth must lie in [0, t_max)"));
        }
        let edge = (depth / delta).round() as usize;
        (0..=n).map(|j| if j >= edge.max(1) { 1.0 } else { 0.0 }).collect()
    } else if let Some(path) = dc.h.strip_prefix("csv:") {
        io::column_from_file(Path::new(path))?
    } else {
        return Err(CliError::validation(
            "deconv.h",
            format!("unknown h spec '{}' (expected one | gap:<depth> | csv:<path>)", dc.h),
        ));
    };
    if h.len() != n + 1 {
        return Err(CliError::validation(
            "deconv.h",
            format!("h has {} samples, grid needs {}", h.len(), n + 1),
        ));
    }

    let phi: Vec<f64> = if let Some(path) = dc.phi.strip_prefix("csv:") {
        io::column_from_file(Path::new(path))?
    } else {
        named_target(&dc.phi, &nodes).ok_or_else(|| {
            CliError::validation(
                "deconv.phi",
                format!("unknown phi spec '{}' (expected t | t2 | t_sin_pi_t | csv:<path>)", dc.phi),
            )
        })?
    };
    if phi.len() != n + 1 {
        return Err(CliError::validation(
            "deconv.phi",
            format!("phi has {} samples, grid needs {}", phi.len(), n + 1),
        ));
    }

    let ladder: Vec<f64> =
        if dc.lambdas.is_empty() { LAMBDA_LADDER.to_vec() } else { dc.lambdas.clone() };
    let (best, table) = deconv::deconv_solve_ladder(&h, &phi, delta, &ladder)?;

    let artifact = DeconvArtifact {
        format_version: io::FORMAT_VERSION,
        delta,
        t_max: dc.t_max,
        h_spec: dc.h.clone(),
        phi_spec: dc.phi.clone(),
        ladder: table.iter().map(|&(lambda, sup_error)| LadderEntry { lambda, sup_error }).collect(),
        best,
    };
    let json_path = dir.join("deconv.json");
    io::write_json(&json_path, &artifact)?;
    announce(&json_path);
    let g_path = dir.join("deconv_g.csv");
    io::write_text(&g_path, &io::column_to_csv(&artifact.best.g))?;
    announce(&g_path);
    println!(
        "best lambda = {:.1e}, sup_error = {:.6e}, edge(h) = {}",
        artifact.best.lambda, artifact.best.sup_error, artifact.best.edge_h
    );
    Ok(())
}

#[derive(Serialize)]
struct TubeArtifact {
    format_version: u32,
    grid: Vec<f64>,
    seed: u64,
    psi: Vec<f64>,
    estimates: Vec<cfs::TubeEstimate>,
}

pub fn cmd_tube(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let gram = build_gram(cfg)?;
    let n = gram.n();
    let psi = match &cfg.tube.target_csv {
        Some(path) => {
            let v = io::column_from_file(Path::new(path))?;
            if v.len() != n {
                return Err(CliError::validation(
                    "tube.target_csv",
                    format!("psi has {} samples, grid has {n}", v.len()),
                ));
            }
            v
        }
        None => vec![0.0; n],
    };
    let gv = GaussianVector::zero_mean(gram);
    let estimates = cfs::tube_probabilities(&gv, &psi, &cfg.tube.epsilons, cfg.tube.n_paths, cfg.seed)?;
    let artifact = TubeArtifact {
        format_version: io::FORMAT_VERSION,
        grid: gv.gram().grid().times().to_vec(),
        seed: cfg.seed,
        psi,
        estimates,
    };
    let path = dir.join("tube.json");
    io::write_json(&path, &artifact)?;
    announce(&path);
    for e in &artifact.estimates {
        println!(
            "eps = {:<8} estimate = {:.6} [{:.6}, {:.6}]",
            e.eps, e.estimate, e.ci_low, e.ci_high
        );
    }
    Ok(())
}
