//! Plain-text matrix and vector I/O.
//!
//! Raw matrices travel as comma-separated values with no header; reals are
//! written in the shortest form that round-trips to the same double, so a
//! file re-read reproduces the bits that were written.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::CovarianceSpec;

/// Shortest round-trip decimal for a double; `NaN`/`inf` spelled literally.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Parse a comma-separated numeric matrix, one row per line.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", lineno + 1, tok)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// Read a vector: a single-column (or single-row) CSV.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(DVector::from_column_slice(m.column(0).as_slice()))
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Parse(format!(
            "expected a vector, found a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_float(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(v: &DVector<f64>) -> String {
    let mut out = String::new();
    for i in 0..v.len() {
        let _ = writeln!(out, "{}", format_float(v[i]));
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    std::fs::write(path, vector_to_csv(v))?;
    Ok(())
}

/// Read a [`CovarianceSpec`] from its JSON description, e.g.
/// `{"variant":"equicorrelated","p":100,"rho":0.5}`.
pub fn read_covariance_spec(path: &Path) -> Result<CovarianceSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("covariance spec: {e}")))
}
