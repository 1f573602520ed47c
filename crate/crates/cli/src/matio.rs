//! Matrix file formats.
//!
//! * `csv` — one sample per row, `d` numeric fields per row, optional single
//!   header row; parsed into the internal samples-as-columns layout.
//! * `bin` — magic `PMX1`, then little-endian `u32` `d` and `u32` `n`, then
//!   `d * n` IEEE-754 binary64 little-endian values in column-major
//!   (sample-major) order. Round-trips bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use precda::SampleMatrix;
use thiserror::Error;

pub const BIN_MAGIC: &[u8; 4] = b"PMX1";

#[derive(Debug, Error)]
pub enum MatIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{row}:{col}: cannot parse '{token}' as a number")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        token: String,
    },
    #[error("{path}:{row}:{col}: non-finite value")]
    NonFinite { path: String, row: usize, col: usize },
    #[error("{path}:{row}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: bad magic (expected PMX1)")]
    BadMagic { path: String },
    #[error("{path}: file is truncated or has trailing bytes (expected {expected} bytes, found {found})")]
    BadLength {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: matrix is empty")]
    Empty { path: String },
    #[error("{path}: dimensions {d} x {n} overflow")]
    Overflow { path: String, d: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Bin,
}

impl MatrixFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(MatrixFormat::Csv),
            "bin" => Some(MatrixFormat::Bin),
            _ => None,
        }
    }
}

/// Picks the format from the file extension; anything but `.bin` is CSV.
pub fn detect_format(path: &Path) -> MatrixFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => MatrixFormat::Bin,
        _ => MatrixFormat::Csv,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> MatIoError {
    MatIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a matrix in the internal samples-as-columns layout.
pub fn load_dmatrix(path: &Path, format: Option<MatrixFormat>) -> Result<DMatrix<f64>, MatIoError> {
    match format.unwrap_or_else(|| detect_format(path)) {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::Bin => load_bin(path),
    }
}

pub fn load_matrix(path: &Path, format: Option<MatrixFormat>) -> Result<SampleMatrix, MatIoError> {
    let data = load_dmatrix(path, format)?;
    SampleMatrix::new(data).map_err(|_| MatIoError::Empty {
        path: path.display().to_string(),
    })
}

fn load_csv(path: &Path) -> Result<DMatrix<f64>, MatIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let pathstr = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, usize> = fields
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse::<f64>().map_err(|_| c))
            .collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(MatIoError::RaggedRow {
                            path: pathstr,
                            row: idx + 1,
                            expected: w,
                            found: values.len(),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                for (c, v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(MatIoError::NonFinite {
                            path: pathstr,
                            row: idx + 1,
                            col: c + 1,
                        });
                    }
                }
                rows.push(values);
            }
            Err(col) => {
                // a single non-numeric leading row is a header
                if rows.is_empty() && width.is_none() {
                    continue;
                }
                return Err(MatIoError::Parse {
                    path: pathstr,
                    row: idx + 1,
                    col: col + 1,
                    token: fields[col].to_string(),
                });
            }
        }
    }
    let n = rows.len();
    let d = width.unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(MatIoError::Empty { path: pathstr });
    }
    // rows are samples; internally samples are columns
    Ok(DMatrix::from_fn(d, n, |i, j| rows[j][i]))
}

fn load_bin(path: &Path) -> Result<DMatrix<f64>, MatIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let pathstr = path.display().to_string();
    if bytes.len() < 12 || &bytes[0..4] != BIN_MAGIC {
        return Err(MatIoError::BadMagic { path: pathstr });
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = d
        .checked_mul(n)
        .ok_or(MatIoError::Overflow {
            path: pathstr.clone(),
            d,
            n,
        })?;
    let expected = 12 + count * 8;
    if bytes.len() != expected {
        return Err(MatIoError::BadLength {
            path: pathstr,
            expected,
            found: bytes.len(),
        });
    }
    if d == 0 || n == 0 {
        return Err(MatIoError::Empty { path: pathstr });
    }
    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        let off = 12 + k * 8;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(MatIoError::NonFinite {
                path: pathstr,
                row: k % d + 1,
                col: k / d + 1,
            });
        }
        values.push(v);
    }
    Ok(DMatrix::from_column_slice(d, n, &values))
}

/// Writes a matrix; CSV rows are samples, `bin` is the column-major contract.
pub fn save_dmatrix(
    path: &Path,
    data: &DMatrix<f64>,
    format: MatrixFormat,
) -> Result<(), MatIoError> {
    match format {
        MatrixFormat::Csv => {
            let mut out = String::new();
            for j in 0..data.ncols() {
                for i in 0..data.nrows() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&format!("{:.16e}", data[(i, j)]));
                }
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        MatrixFormat::Bin => {
            let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
            file.write_all(BIN_MAGIC).map_err(|e| io_err(path, e))?;
            file.write_all(&(data.nrows() as u32).to_le_bytes())
                .map_err(|e| io_err(path, e))?;
            file.write_all(&(data.ncols() as u32).to_le_bytes())
                .map_err(|e| io_err(path, e))?;
            for v in data.iter() {
                // DMatrix iterates column-major, matching the format
                file.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
            }
            Ok(())
        }
    }
}

pub fn save_matrix(
    path: &Path,
    x: &SampleMatrix,
    format: MatrixFormat,
) -> Result<(), MatIoError> {
    save_dmatrix(path, x.data(), format)
}
