//! Artifact serialization.
//!
//! Every float written to an artifact goes through one fixed-precision
//! formatter (12 significant digits), and every JSON artifact carries a
//! `format_version` field. Identical values therefore serialize to
//! identical bytes, which is what makes the determinism contract testable
//! at the file level.
//!
//! Matrices travel as dense CSV with a JSON metadata sidecar; path
//! ensembles as one CSV row per path plus a sidecar; column vectors as
//! single-column CSV with an optional header.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceError, GramMatrix, GramSource, PsdReport};
use crate::gaussian::{PathEnsemble, SimMethod};
use crate::grid::{Grid, GridError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(String),
    #[error("json error: {0}")]
    Json(String),
    #[error("format_version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

/// Canonical fixed-precision rendering: 12 significant digits, negative
/// zero collapsed.
pub fn fmt_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

struct FixedFormatter;

impl serde_json::ser::Formatter for FixedFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// JSON with fixed-precision floats and a trailing newline.
pub fn to_json_fixed<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFormatter);
    value.serialize(&mut ser).map_err(|e| IoError::Json(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| IoError::Json(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let body = to_json_fixed(value)?;
    fs::write(path, body).map_err(|e| IoError::File { path: path.into(), source: e })
}

fn write_file(path: &Path, body: &str) -> Result<(), IoError> {
    fs::write(path, body).map_err(|e| IoError::File { path: path.into(), source: e })
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::File { path: path.into(), source: e })
}

/// Dense matrix as CSV rows.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| IoError::Csv(format!("line {}: {e}", ln + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Csv("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Csv("ragged rows".into()));
    }
    let nrows = rows.len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Single-column CSV. A non-numeric first line is treated as a header.
pub fn column_from_csv(text: &str) -> Result<Vec<f64>, IoError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let s = line.trim().trim_end_matches(',');
        if s.is_empty() {
            continue;
        }
        match s.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if ln == 0 => continue,
            Err(e) => return Err(IoError::Csv(format!("line {}: {e}", ln + 1))),
        }
    }
    if out.is_empty() {
        return Err(IoError::Csv("no numeric rows".into()));
    }
    Ok(out)
}

pub fn column_from_file(path: &Path) -> Result<Vec<f64>, IoError> {
    column_from_csv(&read_file(path)?)
}

pub fn column_to_csv(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

/// Metadata sidecar of a Gram matrix CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct GramMeta {
    pub format_version: u32,
    pub kind: String,
    pub grid: Vec<f64>,
    pub source: GramSource,
    pub l: f64,
    pub quad_step: f64,
    pub tail_error: f64,
    pub normalized: bool,
    pub convergence_delta: f64,
    pub psd: PsdReport,
}

/// Writes `<base>.csv` and `<base>.meta.json`.
pub fn gram_to_files(gram: &GramMatrix, base: &Path) -> Result<(), IoError> {
    let csv_path = base.with_extension("csv");
    let meta_path = base.with_extension("meta.json");
    write_file(&csv_path, &matrix_to_csv(gram.sigma()))?;
    let meta = GramMeta {
        format_version: FORMAT_VERSION,
        kind: "gram".into(),
        grid: gram.grid().times().to_vec(),
        source: gram.source.clone(),
        l: gram.l,
        quad_step: gram.quad_step,
        tail_error: gram.tail_error,
        normalized: gram.normalized,
        convergence_delta: gram.convergence_delta,
        psd: gram.psd.clone(),
    };
    write_json(&meta_path, &meta)
}

/// Reads the pair written by [`gram_to_files`]; the matrix goes through
/// the full symmetry and PSD validation again.
pub fn gram_from_files(base: &Path) -> Result<GramMatrix, IoError> {
    let csv_path = base.with_extension("csv");
    let meta_path = base.with_extension("meta.json");
    let meta: GramMeta =
        serde_json::from_str(&read_file(&meta_path)?).map_err(|e| IoError::Json(e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(IoError::Version { found: meta.format_version, expected: FORMAT_VERSION });
    }
    let sigma = matrix_from_csv(&read_file(&csv_path)?)?;
    let grid = Grid::new(meta.grid)?;
    Ok(GramMatrix::from_dense(
        grid,
        sigma,
        meta.source,
        meta.quad_step,
        meta.l,
        meta.tail_error,
        meta.normalized,
        meta.convergence_delta,
        1e-8,
    )?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub format_version: u32,
    pub kind: String,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub n_paths: usize,
    pub method: SimMethod,
}

/// Writes `<base>.csv` (one row per path) and `<base>.meta.json`.
pub fn ensemble_to_files(ens: &PathEnsemble, base: &Path) -> Result<(), IoError> {
    let csv_path = base.with_extension("csv");
    let meta_path = base.with_extension("meta.json");
    let mut body = String::new();
    for row in ens.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                body.push(',');
            }
            body.push_str(&fmt_f64(*v));
        }
        body.push('\n');
    }
    write_file(&csv_path, &body)?;
    let meta = EnsembleMeta {
        format_version: FORMAT_VERSION,
        kind: "path_ensemble".into(),
        grid: ens.grid.times().to_vec(),
        seed: ens.seed,
        n_paths: ens.n_paths(),
        method: ens.method,
    };
    write_json(&meta_path, &meta)
}

/// Writes a buffered artifact atomically enough for tests: content is
/// fully formatted before the single write call.
pub fn write_text(path: &Path, body: &str) -> Result<(), IoError> {
    let mut f =
        fs::File::create(path).map_err(|e| IoError::File { path: path.into(), source: e })?;
    f.write_all(body.as_bytes()).map_err(|e| IoError::File { path: path.into(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::GramOptions;
    use crate::kernel::MovingAverageKernel;

    #[test]
    fn fixed_formatting_is_canonical() {
        assert_eq!(fmt_f64(0.0), fmt_f64(-0.0));
        assert_eq!(fmt_f64(1.0), "1.00000000000e0");
        assert_eq!(fmt_f64(-0.25), "-2.50000000000e-1");
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 3.25, 0.0, 7.0, -2.0]);
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn column_csv_accepts_optional_header() {
        let v = column_from_csv("psi\n0.0\n1.5\n-2.0\n").unwrap();
        assert_eq!(v, vec![0.0, 1.5, -2.0]);
        let v = column_from_csv("0.5\n1.0\n").unwrap();
        assert_eq!(v, vec![0.5, 1.0]);
        assert!(column_from_csv("a\nb\n").is_err());
    }

    #[test]
    fn gram_files_roundtrip_within_precision() {
        let dir = std::env::temp_dir().join(format!("bma_io_test_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let grid = Grid::new(vec![0.25, 0.5, 1.0]).unwrap();
        let k = MovingAverageKernel::fbm(0.75).unwrap();
        let g = crate::covariance::gram(&k, &grid, &GramOptions::default()).unwrap();
        let base = dir.join("gram_test");
        gram_to_files(&g, &base).unwrap();
        let back = gram_from_files(&base).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let rel = (back.entry(i, j) - g.entry(i, j)).abs() / g.entry(i, j).abs().max(1.0);
                assert!(rel < 1e-11, "entry ({i},{j})");
            }
        }
        assert_eq!(back.normalized, g.normalized);
        fs::remove_dir_all(&dir).ok();
    }
}
