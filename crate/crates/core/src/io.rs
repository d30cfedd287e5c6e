//! Shared file-format pieces: row-major matrix records and content digests.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("matrix record {name}: {rows}x{cols} needs {want} entries, found {got}")]
    MatrixLength { name: String, rows: usize, cols: usize, want: usize, got: usize },
}

/// Dense matrix with explicit dimensions, entries listed row by row.
///
/// Floats are written with the shortest representation that round-trips, so
/// save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>, IoError> {
        let want = self.rows * self.cols;
        if self.data.len() != want {
            return Err(IoError::MatrixLength {
                name: name.to_string(),
                rows: self.rows,
                cols: self.cols,
                want,
                got: self.data.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        Self::from_matrix(m)
    }
}

/// Hex SHA-256 of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Fs { path: path.display().to_string(), source })?;
    Ok(digest_bytes(&bytes))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Fs { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| IoError::Fs { path: parent.display().to_string(), source })?;
        }
    }
    fs::write(path, text).map_err(|source| IoError::Fs { path: path.display().to_string(), source })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable record");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: origin.to_string(),
        msg: format!("line {} column {}: {}", e.line(), e.column(), e),
    })
}

pub fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, IoError> {
    toml::from_str(text).map_err(|e| {
        let loc = e
            .span()
            .map(|span| {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}: ")
            })
            .unwrap_or_default();
        IoError::Parse { path: origin.to_string(), msg: format!("{loc}{}", e.message()) }
    })
}

/// Parses `"1.0,2,-3"` (commas or whitespace) into a vector.
pub fn parse_vector(text: &str) -> Result<DVector<f64>, String> {
    let vals: Result<Vec<f64>, _> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err("empty vector".to_string());
    }
    Ok(DVector::from_vec(vals))
}

/// Formats a float so it parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
