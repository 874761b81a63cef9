//! Matrix Market coordinate files and plain right-hand-side files.
//!
//! Only the `matrix coordinate real general` flavour is accepted. Indices
//! are 1-based on disk and 0-based in memory. Values are written with 17
//! significant digits so that a write/read round trip is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walksolve::{SparseMatrix, SparseSystem, SystemError};

const BANNER: &str = "%%MatrixMarket matrix coordinate real general";

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension mismatch: matrix has {expected} rows, right-hand side has {found} entries")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("diagonal entry ({0}, {0}) is missing or zero")]
    MissingDiagonal(usize),
    #[error(transparent)]
    System(SystemError),
}

impl From<SystemError> for MtxError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::MissingDiagonal(i) => Self::MissingDiagonal(i + 1),
            SystemError::DimensionMismatch { expected, found } => {
                Self::DimensionMismatch { expected, found }
            }
            other => Self::System(other),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MtxError {
    MtxError::Parse {
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String, MtxError> {
    fs::read_to_string(path).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), MtxError> {
    fs::write(path, text).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MtxError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

/// Parses a coordinate file into a square matrix.
pub fn parse_matrix(text: &str) -> Result<SparseMatrix, MtxError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, banner)) if banner.split_whitespace().map(str::to_ascii_lowercase).eq(BANNER
            .split_whitespace()
            .map(str::to_ascii_lowercase)) => {}
        Some((_, other)) if other.starts_with("%%MatrixMarket") => {
            return Err(parse_err(1, format!("unsupported format '{other}'")))
        }
        _ => return Err(parse_err(1, "missing Matrix Market banner")),
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let last_line = text.lines().count();

    let (size_line, size) = body
        .next()
        .ok_or_else(|| parse_err(last_line + 1, "missing size line"))?;
    let mut toks = size.split_whitespace();
    let rows: usize = field(toks.next(), size_line, "row count")?;
    let cols: usize = field(toks.next(), size_line, "column count")?;
    let nnz: usize = field(toks.next(), size_line, "entry count")?;
    if toks.next().is_some() {
        return Err(parse_err(size_line, "size line has extra fields"));
    }
    if rows != cols {
        return Err(MtxError::DimensionMismatch {
            expected: rows,
            found: cols,
        });
    }

    let mut triplets = Vec::with_capacity(nnz);
    let mut seen = 0;
    for (line, entry) in body {
        if seen == nnz {
            return Err(parse_err(line, format!("more than {nnz} entries")));
        }
        let mut toks = entry.split_whitespace();
        let i: usize = field(toks.next(), line, "row index")?;
        let j: usize = field(toks.next(), line, "column index")?;
        let v: f64 = field(toks.next(), line, "value")?;
        if toks.next().is_some() {
            return Err(parse_err(line, "entry has extra fields"));
        }
        if i == 0 || j == 0 || i > rows || j > cols {
            return Err(parse_err(line, format!("index ({i}, {j}) outside {rows}x{cols}")));
        }
        triplets.push((i - 1, j - 1, v));
        seen += 1;
    }
    if seen < nnz {
        return Err(parse_err(
            last_line + 1,
            format!("expected {nnz} entries, found {seen}"),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, triplets).map_err(MtxError::from)
}

/// Parses one real per line; blank lines are ignored.
pub fn parse_rhs(text: &str) -> Result<Vec<f64>, MtxError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| field(Some(l.trim()), i + 1, "value"))
        .collect()
}

pub fn format_matrix(m: &SparseMatrix) -> String {
    let mut out = format!("{BANNER}\n{} {} {}\n", m.rows(), m.cols(), m.nnz());
    for (i, j, v) in m.triplets() {
        writeln!(out, "{} {} {v:.16e}", i + 1, j + 1).expect("writing to a String");
    }
    out
}

pub fn format_rhs(b: &[f64]) -> String {
    b.iter().map(|v| format!("{v:.16e}\n")).collect()
}

pub fn read_matrix(path: &Path) -> Result<SparseMatrix, MtxError> {
    parse_matrix(&read(path)?)
}

pub fn read_rhs(path: &Path) -> Result<Vec<f64>, MtxError> {
    parse_rhs(&read(path)?)
}

/// Reads a matrix and its right-hand side; a missing `rhs` path means
/// `b = 0`.
pub fn read_system(matrix: &Path, rhs: Option<&Path>) -> Result<SparseSystem, MtxError> {
    let m = read_matrix(matrix)?;
    let b = match rhs {
        Some(p) => read_rhs(p)?,
        None => vec![0.0; m.rows()],
    };
    if b.len() != m.rows() {
        return Err(MtxError::DimensionMismatch {
            expected: m.rows(),
            found: b.len(),
        });
    }
    Ok(SparseSystem::from_matrix(m, b)?)
}

pub fn write_system(sys: &SparseSystem, matrix: &Path, rhs: &Path) -> Result<(), MtxError> {
    write(matrix, &format_matrix(sys.matrix()))?;
    write(rhs, &format_rhs(sys.rhs()))
}
