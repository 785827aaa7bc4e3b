//! Matrix readers and writers: Matrix Market coordinate, dense CSV and a
//! raw little-endian `f64` dump.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use npcg_core::operator::DenseOperator;
use serde::{Deserialize, Serialize};

/// Raw files start with two little-endian `u64`s: rows, then columns.
pub const RAW_HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    MatrixMarket,
    CsvDense,
    RawF64,
}

impl FromStr for MatrixFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "matrix-market" | "mm" | "mtx" => Ok(Self::MatrixMarket),
            "csv-dense" | "csv" => Ok(Self::CsvDense),
            "raw-f64" | "raw" => Ok(Self::RawF64),
            other => Err(format!("unknown matrix format '{other}'")),
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MatrixMarket => "matrix-market",
            Self::CsvDense => "csv-dense",
            Self::RawF64 => "raw-f64",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    Asymmetric { row: usize, col: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("raw file: {0}")]
    Raw(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>, IoError> {
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(&read_text(path)?),
        MatrixFormat::CsvDense => parse_csv(&read_text(path)?),
        MatrixFormat::RawF64 => decode_raw(&read_bytes(path)?),
    }
}

/// Loads a matrix that will be used as a symmetric operator. Rejects
/// non-square input and any pair `a_ij != a_ji`.
pub fn load_symmetric(path: &Path, format: MatrixFormat) -> Result<DenseOperator, IoError> {
    let m = load_matrix(path, format)?;
    check_symmetric(&m)?;
    DenseOperator::new(m).map_err(|e| IoError::Raw(e.to_string()))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<(), IoError> {
    if m.nrows() != m.ncols() {
        return Err(IoError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for j in 0..m.ncols() {
        for i in j + 1..m.nrows() {
            if m[(i, j)] != m[(j, i)] {
                return Err(IoError::Asymmetric {
                    row: i + 1,
                    col: j + 1,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Real coordinate Matrix Market. `symmetric` files have their
/// off-diagonal entries mirrored; giving both `(i, j)` and `(j, i)` with
/// different values is rejected.
pub fn parse_matrix_market(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (lineno, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let words: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(
            lineno,
            "expected '%%MatrixMarket matrix coordinate real <symmetry>'",
        ));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(
            lineno,
            format!("unsupported layout '{}'", words[2]),
        ));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(parse_err(
            lineno,
            format!("unsupported field '{}'", words[3]),
        ));
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(lineno, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (lineno, size) = body
        .next()
        .ok_or_else(|| parse_err(lineno + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(lineno, format!("bad size line: {e}")))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(
            lineno,
            "size line needs rows, columns and entry count",
        ));
    };
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(parse_err(lineno, "symmetric matrix must be square"));
    }

    let mut m = DMatrix::zeros(rows, cols);
    let mut seen = DMatrix::from_element(rows, cols, false);
    let mut count = 0;
    let mut last_line = lineno;
    for (lineno, line) in body {
        last_line = lineno;
        let mut it = line.split_whitespace();
        let mut index = |name: &str, bound: usize| -> Result<usize, IoError> {
            let w = it
                .next()
                .ok_or_else(|| parse_err(lineno, format!("missing {name} index")))?;
            let k: usize = w
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad {name} index '{w}'")))?;
            if k == 0 || k > bound {
                return Err(parse_err(
                    lineno,
                    format!("{name} index {k} out of range 1..={bound}"),
                ));
            }
            Ok(k - 1)
        };
        let i = index("row", rows)?;
        let j = index("column", cols)?;
        let w = it
            .next()
            .ok_or_else(|| parse_err(lineno, "missing value"))?;
        let v: f64 = w
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad value '{w}'")))?;
        if !v.is_finite() {
            return Err(parse_err(lineno, "non-finite value"));
        }
        if it.next().is_some() {
            return Err(parse_err(lineno, "trailing tokens"));
        }
        count += 1;
        if count > nnz {
            return Err(parse_err(
                lineno,
                format!("more than the declared {nnz} entries"),
            ));
        }
        if seen[(i, j)] {
            return Err(parse_err(
                lineno,
                format!("duplicate entry ({}, {})", i + 1, j + 1),
            ));
        }
        if symmetry == Symmetry::Symmetric && i != j && seen[(j, i)] {
            if m[(j, i)] != v {
                return Err(IoError::Asymmetric {
                    row: i + 1,
                    col: j + 1,
                });
            }
            seen[(i, j)] = true;
            continue;
        }
        m[(i, j)] = v;
        seen[(i, j)] = true;
        if symmetry == Symmetry::Symmetric {
            m[(j, i)] = v;
        }
    }
    if count != nnz {
        return Err(parse_err(
            last_line,
            format!("declared {nnz} entries, found {count}"),
        ));
    }
    Ok(m)
}

/// Writes the lower triangle under the `symmetric` qualifier when the
/// matrix is exactly symmetric, every nonzero under `general` otherwise.
pub fn format_matrix_market(m: &DMatrix<f64>) -> String {
    let symmetric = check_symmetric(m).is_ok();
    let mut entries = Vec::new();
    for j in 0..m.ncols() {
        let start = if symmetric { j } else { 0 };
        for i in start..m.nrows() {
            if m[(i, j)] != 0.0 {
                entries.push(format!("{} {} {:e}", i + 1, j + 1, m[(i, j)]));
            }
        }
    }
    let kind = if symmetric { "symmetric" } else { "general" };
    let mut out = format!("%%MatrixMarket matrix coordinate real {kind}\n");
    out.push_str(&format!("{} {} {}\n", m.nrows(), m.ncols(), entries.len()));
    for e in entries {
        out.push_str(&e);
        out.push('\n');
    }
    out
}

/// Row-major, comma separated. Blank lines and `#` comments are skipped.
pub fn parse_csv(text: &str) -> Result<DMatrix<f64>, IoError> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut n = 0;
        for field in t.split(',') {
            let f = field.trim();
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number '{f}'")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, "non-finite value"));
            }
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(parse_err(lineno, format!("expected {c} fields, found {n}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(1, "empty file"))?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn format_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Header of two little-endian `u64` dimensions, then row-major `f64`s.
pub fn decode_raw(bytes: &[u8]) -> Result<DMatrix<f64>, IoError> {
    if bytes.len() < RAW_HEADER_BYTES {
        return Err(IoError::Raw(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let dim = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let (rows, cols) = (dim(0), dim(1));
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| IoError::Raw(format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[RAW_HEADER_BYTES..];
    if payload.len() != expected {
        return Err(IoError::Raw(format!(
            "{rows}x{cols} needs {expected} data bytes, file has {}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(
        rows as usize,
        cols as usize,
        &values,
    ))
}

pub fn encode_raw(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_BYTES + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<(), IoError> {
    match format {
        MatrixFormat::MatrixMarket => write_file(path, format_matrix_market(m).as_bytes()),
        MatrixFormat::CsvDense => write_file(path, format_csv(m).as_bytes()),
        MatrixFormat::RawF64 => write_file(path, &encode_raw(m)),
    }
}
