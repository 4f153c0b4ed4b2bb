//! Dense row-major storage and column statistics.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("duplicate column label {0:?}")]
    DuplicateLabel(String),
    #[error("label count {found} does not match column count {cols}")]
    LabelCountMismatch { cols: usize, found: usize },
    #[error("column index {index} out of range for {cols} columns")]
    IndexOutOfRange { index: usize, cols: usize },
    #[error("column index {0} selected more than once")]
    DuplicateIndex(usize),
    #[error("matrix has no rows")]
    EmptyMatrix,
}

/// Immutable row-major matrix of finite `f64` values with optional column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl DenseMatrix {
    /// Builds a matrix, rejecting wrong lengths, NaN/Inf entries and duplicate labels.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self, MatrixError> {
        let expected = rows
            .checked_mul(cols)
            .ok_or(MatrixError::DimensionMismatch { expected: usize::MAX, found: values.len() })?;
        if values.len() != expected {
            return Err(MatrixError::DimensionMismatch { expected, found: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFiniteValue { row: pos / cols, col: pos % cols });
        }
        if let Some(labels) = &labels {
            check_labels(labels, cols)?;
        }
        Ok(Self { rows, cols, values, labels })
    }

    /// Zero-filled matrix, used as an output buffer by the covariance routines.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: alloc::vec![0.0; rows * cols], labels: None }
    }

    /// Wraps already-computed values without the finiteness scan.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values, labels: None }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Replaces the labels, validating count and uniqueness.
    pub fn with_labels(mut self, labels: Option<Vec<String>>) -> Result<Self, MatrixError> {
        if let Some(l) = &labels {
            check_labels(l, self.cols)?;
        }
        self.labels = labels;
        Ok(self)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of bounds");
        self.values[row * self.cols + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Copies one column out into a contiguous vector, top to bottom.
    pub fn column(&self, col: usize) -> Result<Vec<f64>, MatrixError> {
        if col >= self.cols {
            return Err(MatrixError::IndexOutOfRange { index: col, cols: self.cols });
        }
        Ok(self.values.iter().skip(col).step_by(self.cols).copied().collect())
    }

    /// Arithmetic mean of a column, summed in ascending row order.
    pub fn column_mean(&self, col: usize) -> Result<f64, MatrixError> {
        if col >= self.cols {
            return Err(MatrixError::IndexOutOfRange { index: col, cols: self.cols });
        }
        if self.rows == 0 {
            return Err(MatrixError::EmptyMatrix);
        }
        let mut sum = 0.0;
        for r in 0..self.rows {
            sum += self.values[r * self.cols + col];
        }
        Ok(sum / self.rows as f64)
    }

    /// New matrix holding the selected columns in the given order.
    pub fn column_slice(&self, cols: &[usize]) -> Result<DenseMatrix, MatrixError> {
        for (i, &c) in cols.iter().enumerate() {
            if c >= self.cols {
                return Err(MatrixError::IndexOutOfRange { index: c, cols: self.cols });
            }
            if cols[..i].contains(&c) {
                return Err(MatrixError::DuplicateIndex(c));
            }
        }
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        let labels = self.labels.as_ref().map(|l| cols.iter().map(|&c| l[c].clone()).collect());
        Ok(DenseMatrix { rows: self.rows, cols: cols.len(), values, labels })
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// True when the matrix is square and entry (i, j) bit-equals entry (j, i).
    pub fn is_bit_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self.get(i, j).to_bits() == self.get(j, i).to_bits()))
    }

    /// Bitwise equality of shape and values; labels are ignored.
    pub fn bit_eq(&self, other: &DenseMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn check_labels(labels: &[String], cols: usize) -> Result<(), MatrixError> {
    if labels.len() != cols {
        return Err(MatrixError::LabelCountMismatch { cols, found: labels.len() });
    }
    let mut sorted: Vec<&String> = labels.iter().collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(MatrixError::DuplicateLabel(w[0].clone()));
    }
    Ok(())
}
