//! Sparse matrix storage and the `Ax = b` problem instance.
//!
//! Node ids are 0-based everywhere inside the library. File formats and the
//! CLI convert to and from 1-based ids at their boundary.

use std::fmt;

use thiserror::Error;

/// Node identifier (0-based).
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("system must have at least one node")]
    Empty,
    #[error("entry ({row}, {col}) is outside a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("non-finite right-hand side at index {0}")]
    NonFiniteRhs(usize),
    #[error("diagonal entry {0} is missing or zero")]
    MissingDiagonal(NodeId),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Compressed sparse row matrix with sorted column indices per row.
///
/// Explicitly stored zeros are dropped at construction, so the stored
/// pattern is exactly the nonzero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are an
    /// error rather than being summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, SystemError> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, col, value) in triplets {
            if row >= rows || col >= cols {
                return Err(SystemError::IndexOutOfRange {
                    row,
                    col,
                    rows,
                    cols,
                });
            }
            if !value.is_finite() {
                return Err(SystemError::NonFinite { row, col });
            }
            entries.push((row, col, value));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(SystemError::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            });
        }

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for &(r, c, v) in entries.iter().filter(|e| e.2 != 0.0) {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Number of stored nonzeros.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(col, value)` pairs in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// All nonzeros as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(i, j, v)| (j, i, v)))
            .expect("transpose of a valid matrix is valid")
    }

    /// `y = M x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Elementwise absolute value.
    pub fn abs(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.abs()).collect(),
            ..self.clone()
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A square sparse system `Ax = b` whose diagonal is fully nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    matrix: SparseMatrix,
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl SparseSystem {
    /// Builds a system from 0-based triplets and a right-hand side.
    pub fn new(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        rhs: Vec<f64>,
    ) -> Result<Self, SystemError> {
        let matrix = SparseMatrix::from_triplets(n, n, triplets)?;
        Self::from_matrix(matrix, rhs)
    }

    /// Wraps an existing square matrix.
    pub fn from_matrix(matrix: SparseMatrix, rhs: Vec<f64>) -> Result<Self, SystemError> {
        let n = matrix.rows();
        if n == 0 {
            return Err(SystemError::Empty);
        }
        if !matrix.is_square() {
            return Err(SystemError::DimensionMismatch {
                expected: n,
                found: matrix.cols(),
            });
        }
        if rhs.len() != n {
            return Err(SystemError::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(SystemError::NonFiniteRhs(i));
        }
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let d = matrix.get(i, i);
            if d == 0.0 {
                // Explicit zeros are dropped on construction, so a zero
                // here means the entry was absent or stored as 0.
                return Err(SystemError::MissingDiagonal(i));
            }
            diag.push(d);
        }
        Ok(Self { matrix, diag, rhs })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `a_ij`.
    pub fn a(&self, i: NodeId, j: NodeId) -> f64 {
        if i == j {
            self.diag[i]
        } else {
            self.matrix.get(i, j)
        }
    }

    /// Off-diagonal nonzeros of row `i`.
    pub fn off_diagonal(&self, i: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.matrix.row(i).filter(move |&(j, _)| j != i)
    }

    /// Row-scaled copy `(D A, D b)` for a positive diagonal `D`.
    pub fn row_scaled(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n());
        let triplets = self.matrix.triplets().map(|(i, j, v)| (i, j, v * d[i]));
        let rhs = self.rhs.iter().zip(d).map(|(b, s)| b * s).collect();
        Self::new(self.n(), triplets, rhs).expect("scaling preserves validity")
    }

    /// Similarity-scaled copy `(D⁻¹ A D, D⁻¹ b)`; its solution is `D⁻¹ x*`.
    pub fn similarity_scaled(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n());
        let triplets = self
            .matrix
            .triplets()
            .map(|(i, j, v)| (i, j, v * d[j] / d[i]));
        let rhs = self.rhs.iter().zip(d).map(|(b, s)| b / s).collect();
        Self::new(self.n(), triplets, rhs).expect("scaling preserves validity")
    }

    /// Returns a copy with a different right-hand side.
    pub fn with_rhs(&self, rhs: Vec<f64>) -> Result<Self, SystemError> {
        Self::from_matrix(self.matrix.clone(), rhs)
    }
}

impl fmt::Display for SparseSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SparseSystem(n = {}, nnz = {})",
            self.n(),
            self.matrix.nnz()
        )
    }
}
