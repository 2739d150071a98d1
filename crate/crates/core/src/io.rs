//! CSV data matrices and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn file_err(path: &Path, message: impl Into<String>) -> Error {
    Error::File { path: path.to_path_buf(), message: message.into() }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Renders a data matrix as CSV with header `x1..xm`, one row per observation.
/// Floats use the shortest representation that round-trips exactly.
pub fn matrix_to_csv(data: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=data.ncols()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols()).map(|j| format!("{}", data[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, data: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, matrix_to_csv(data).as_bytes())
}

/// Reads a headed numeric CSV into an `n × m` matrix. An empty file yields
/// a `0 × 0` matrix; a header-only file yields `0 × m`.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_matrix_csv(&text).map_err(|m| file_err(path, m))
}

fn parse_matrix_csv(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    if text.trim().is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let m = reader.headers().map_err(|e| e.to_string())?.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        if record.len() != m {
            return Err(format!("row {} has {} fields, expected {m}", i + 1, record.len()));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("row {}, column {}: '{field}' is not a number", i + 1, j + 1))?;
            values.push(v);
        }
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, m, &values))
}

/// Rejects negative or non-finite entries; every estimator lives on the
/// non-negative orthant.
pub fn check_nonnegative(data: &DMatrix<f64>) -> Result<()> {
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            let v = data[(i, j)];
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "data entry ({}, {}) = {v}; all entries must be finite and >= 0",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}
