//! End-to-end checks of the binary: exit codes, diagnostics, artifact
//! shapes, and the documented example invocations.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bma")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bma_cli_{}_{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn check_cfs_brownian_16_intervals() {
    let dir = scratch("checkcfs");
    let cfg = write_config(
        &dir,
        "[process]\nkind = \"fbm\"\nhurst = 0.5\n[grid]\nt_max = 1.0\npoints = 17\n",
    );
    let out = Command::new(bin())
        .args(["check-cfs", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("cfs_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["grid_verdict"], serde_json::Value::Bool(true));
    let min_v = report["min_cond_variance"]["value"].as_f64().unwrap();
    assert!((min_v - 1.0 / 16.0).abs() < 1e-8, "min variance {min_v}");
    assert!(report["continuity_caveat"].as_str().unwrap().contains("grid"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_config_exits_2_with_field_diagnostic() {
    let dir = scratch("badhurst");
    let cfg = write_config(&dir, "[process]\nkind = \"fbm\"\nhurst = 1.5\n");
    let out = Command::new(bin())
        .args(["gram", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let diag: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(diag["error"], "validation");
    assert_eq!(diag["field"], "process.hurst");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = scratch("unknownkey");
    let cfg = write_config(&dir, "[process]\nkind = \"fbm\"\nhurts = 0.5\n");
    let out = Command::new(bin())
        .args(["gram", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hurts"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn numerical_failure_exits_3() {
    let dir = scratch("tailcap");
    // truncation too shallow for the requested cap
    let cfg = write_config(
        &dir,
        "[process]\nkind = \"fbm\"\nhurst = 0.75\n[grid]\npoints = 5\n[numerics]\nl = 5.0\ntail_cap = 1e-12\n",
    );
    let out = Command::new(bin())
        .args(["gram", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(diag["error"], "numerical");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn gram_artifacts_roundtrip_through_the_library() {
    let dir = scratch("gramfiles");
    let cfg = write_config(
        &dir,
        "[process]\nkind = \"indicator\"\nwidth = 1.0\n[grid]\nt_max = 1.0\npoints = 5\n",
    );
    let out = Command::new(bin())
        .args(["gram", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let gram = bma::io::gram_from_files(&dir.join("gram")).unwrap();
    // indicator Gram is 2 min(s, t)
    let t = gram.grid().times().to_vec();
    for i in 0..gram.n() {
        for j in 0..gram.n() {
            assert!((gram.entry(i, j) - 2.0 * t[i].min(t[j])).abs() < 1e-8);
        }
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_writes_ensemble_with_metadata() {
    let dir = scratch("simulate");
    let cfg = write_config(
        &dir,
        "seed = 11\n[grid]\npoints = 9\n[simulate]\nn_paths = 50\n",
    );
    let out = Command::new(bin())
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("paths.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["n_paths"], 50);
    assert_eq!(meta["format_version"], 1);
    let csv = std::fs::read_to_string(dir.join("paths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 50);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_flag_overrides_config() {
    let dir = scratch("seedflag");
    let cfg = write_config(&dir, "seed = 1\n[grid]\npoints = 5\n[simulate]\nn_paths = 4\n");
    let run = |seed_args: &[&str], out: &str| {
        let out_dir = dir.join(out);
        let mut c = Command::new(bin());
        c.args(["simulate", "--config"]).arg(&cfg).arg("--out-dir").arg(&out_dir).args(seed_args);
        assert!(c.output().unwrap().status.success());
        std::fs::read(out_dir.join("paths.csv")).unwrap()
    };
    let a = run(&[], "a");
    let b = run(&["--seed", "1"], "b");
    let c = run(&["--seed", "2"], "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn tube_artifact_has_wilson_intervals() {
    let dir = scratch("tube");
    let cfg = write_config(
        &dir,
        "[grid]\npoints = 9\n[tube]\nepsilons = [0.5, 1.0, 2.0]\nn_paths = 4000\n",
    );
    let out = Command::new(bin())
        .args(["tube", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let artifact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("tube.json")).unwrap()).unwrap();
    let est = artifact["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 3);
    let mut prev = -1.0;
    for e in est {
        let p = e["estimate"].as_f64().unwrap();
        assert!(e["ci_low"].as_f64().unwrap() <= p && p <= e["ci_high"].as_f64().unwrap());
        assert!(p >= prev);
        prev = p;
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn deconvolve_reports_ladder_and_best() {
    let dir = scratch("deconv");
    let cfg = write_config(&dir, "[deconv]\nh = \"one\"\nphi = \"t2\"\ndelta_exp = 7\n");
    let out = Command::new(bin())
        .args(["deconvolve", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let artifact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("deconv.json")).unwrap()).unwrap();
    assert_eq!(artifact["ladder"].as_array().unwrap().len(), 10);
    let best_sup = artifact["best"]["sup_error"].as_f64().unwrap();
    assert!(best_sup < 1e-6, "best sup {best_sup}");
    let g = std::fs::read_to_string(dir.join("deconv_g.csv")).unwrap();
    assert_eq!(g.lines().count(), 129);
    std::fs::remove_dir_all(&dir).ok();
}
