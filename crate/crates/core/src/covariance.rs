//! Local, cross and centralized sample covariance, and the block merge that
//! assembles the global matrix from per-site pieces.
//!
//! Every entry of every block goes through the same two-pass kernel: column
//! means summed in ascending row order, then centered products summed in
//! ascending row order and divided by `n - 1`. Because the merged matrix and
//! the centralized matrix evaluate identical floating-point expressions over
//! identical columns, they agree bit for bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::{DenseMatrix, MatrixError};

/// Identifier of a data-holding site, `0..t`.
pub type SiteId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CovarianceError {
    #[error("columns have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 rows for a sample covariance, got {0}")]
    TooFewRows(usize),
    #[error("blocks have different row counts ({0} vs {1})")]
    RowCountMismatch(usize, usize),
    #[error("cross covariance requested between site {0} and itself")]
    SameSite(SiteId),
    #[error("invalid column block: {0}")]
    InvalidBlock(&'static str),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("global column pair ({0}, {1}) is not covered by any block")]
    MissingPair(usize, usize),
    #[error("global column pair ({0}, {1}) is covered more than once")]
    OverlappingPair(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

/// One site's vertical slice of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock {
    site: SiteId,
    data: DenseMatrix,
    global_cols: Vec<usize>,
}

impl ColumnBlock {
    /// `global_cols` must be strictly increasing and match `data.cols()`.
    pub fn new(site: SiteId, data: DenseMatrix, global_cols: Vec<usize>) -> Result<Self, CovarianceError> {
        if data.cols() != global_cols.len() {
            return Err(CovarianceError::InvalidBlock("global column count differs from data width"));
        }
        if global_cols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CovarianceError::InvalidBlock("global columns not strictly increasing"));
        }
        Ok(Self { site, data, global_cols })
    }

    pub fn site(&self) -> SiteId {
        self.site
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn global_cols(&self) -> &[usize] {
        &self.global_cols
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.global_cols.len()
    }

    pub fn into_parts(self) -> (SiteId, DenseMatrix, Vec<usize>) {
        (self.site, self.data, self.global_cols)
    }
}

/// Covariance sub-matrix between the columns of `site_a` (rows) and `site_b` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CovBlock {
    pub site_a: SiteId,
    pub site_b: SiteId,
    pub block: DenseMatrix,
    pub rows_global_cols: Vec<usize>,
    pub cols_global_cols: Vec<usize>,
}

impl CovBlock {
    pub fn is_local(&self) -> bool {
        self.site_a == self.site_b
    }
}

/// The full `m x m` covariance matrix, exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCovariance {
    matrix: DenseMatrix,
    labels: Option<Vec<String>>,
}

impl GlobalCovariance {
    /// Wraps a symmetric matrix. Rejects non-square, non-bit-symmetric input
    /// and negative diagonal entries.
    pub fn from_matrix(matrix: DenseMatrix) -> Result<Self, CovarianceError> {
        if !matrix.is_bit_symmetric() {
            return Err(CovarianceError::InvalidBlock("matrix is not exactly symmetric"));
        }
        if (0..matrix.rows()).any(|i| matrix.get(i, i) < 0.0) {
            return Err(CovarianceError::InvalidBlock("negative variance on the diagonal"));
        }
        let labels = matrix.labels().map(<[String]>::to_vec);
        Ok(Self { matrix, labels })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<String>>) -> Result<Self, CovarianceError> {
        self.matrix = self.matrix.with_labels(labels.clone())?;
        self.labels = labels;
        Ok(self)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn bit_eq(&self, other: &GlobalCovariance) -> bool {
        self.matrix.bit_eq(&other.matrix)
    }

    /// Canonical byte encoding: row-major binary64, little-endian.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.matrix.values().iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Sample covariance of two columns given their means, denominator `n - 1`.
pub fn covariance_pair(x: &[f64], y: &[f64], mean_x: f64, mean_y: f64) -> Result<f64, CovarianceError> {
    if x.len() != y.len() {
        return Err(CovarianceError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CovarianceError::TooFewRows(x.len()));
    }
    let mut sum = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sum += (xi - mean_x) * (yi - mean_y);
    }
    Ok(sum / (x.len() - 1) as f64)
}

/// Columns of a matrix, each centered on its own mean.
///
/// `(x_i - mean)` is evaluated once per element here instead of once per
/// pair; the stored differences are the same values `covariance_pair` forms
/// on the fly, so results are unchanged bit for bit.
struct CenteredColumns {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl CenteredColumns {
    fn new(data: &DenseMatrix) -> Result<Self, CovarianceError> {
        let rows = data.rows();
        if rows < 2 {
            return Err(CovarianceError::TooFewRows(rows));
        }
        let columns = (0..data.cols())
            .map(|c| {
                let mean = data.column_mean(c)?;
                Ok(data.column(c)?.into_iter().map(|v| v - mean).collect())
            })
            .collect::<Result<Vec<Vec<f64>>, MatrixError>>()?;
        Ok(Self { rows, columns })
    }

    fn pair(&self, a: usize, b: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (da, db) in self.columns[a].iter().zip(b) {
            sum += da * db;
        }
        sum / (self.rows - 1) as f64
    }

    /// Upper triangle computed, lower triangle mirrored.
    fn symmetric(&self) -> DenseMatrix {
        let n = self.columns.len();
        let mut out = vec![0.0; n * n];
        for p in 0..n {
            for q in p..n {
                let v = self.pair(p, &self.columns[q]);
                out[p * n + q] = v;
                out[q * n + p] = v;
            }
        }
        DenseMatrix::from_parts(n, n, out)
    }
}

/// Covariance of a site's own columns (`C_jj`).
pub fn local_covariance(block: &ColumnBlock) -> Result<CovBlock, CovarianceError> {
    let centered = CenteredColumns::new(&block.data)?;
    Ok(CovBlock {
        site_a: block.site,
        site_b: block.site,
        block: centered.symmetric(),
        rows_global_cols: block.global_cols.clone(),
        cols_global_cols: block.global_cols.clone(),
    })
}

/// Cross covariance computed at `receiver` from the raw columns shipped by
/// `sender`. Rows follow the sender's columns, columns the receiver's.
pub fn cross_covariance(receiver: &ColumnBlock, sender: &ColumnBlock) -> Result<CovBlock, CovarianceError> {
    if receiver.rows() != sender.rows() {
        return Err(CovarianceError::RowCountMismatch(sender.rows(), receiver.rows()));
    }
    if receiver.site == sender.site {
        return Err(CovarianceError::SameSite(sender.site));
    }
    let s = CenteredColumns::new(&sender.data)?;
    let r = CenteredColumns::new(&receiver.data)?;
    let (ma, mb) = (sender.width(), receiver.width());
    let mut out = vec![0.0; ma * mb];
    for u in 0..ma {
        for v in 0..mb {
            out[u * mb + v] = s.pair(u, &r.columns[v]);
        }
    }
    Ok(CovBlock {
        site_a: sender.site,
        site_b: receiver.site,
        block: DenseMatrix::from_parts(ma, mb, out),
        rows_global_cols: sender.global_cols.clone(),
        cols_global_cols: receiver.global_cols.clone(),
    })
}

/// Single-machine covariance of the whole matrix; the oracle for the merge.
pub fn centralized_covariance(m: &DenseMatrix) -> Result<GlobalCovariance, CovarianceError> {
    if m.cols() == 0 {
        return Err(CovarianceError::InvalidBlock("matrix has no columns"));
    }
    let matrix = CenteredColumns::new(m)?.symmetric();
    let labels = m.labels().map(<[String]>::to_vec);
    let matrix = matrix.with_labels(labels.clone())?;
    Ok(GlobalCovariance { matrix, labels })
}

/// Upper-triangle index of the unordered pair `(i, j)` in an `m x m` matrix.
fn pair_slot(i: usize, j: usize, m: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    lo * m - lo * (lo + 1) / 2 + hi
}

/// Places every block entry at its global position and mirrors it.
///
/// Coverage is checked in full before anything is written: each unordered
/// global column pair, diagonal included, must be supplied by exactly one
/// block, and each column must belong to exactly one local block.
pub fn merge_blocks(
    locals: &[CovBlock],
    crosses: &[CovBlock],
    total_cols: usize,
) -> Result<GlobalCovariance, MergeError> {
    let m = total_cols;
    if m == 0 {
        return Err(MergeError::DimensionMismatch("total column count is zero"));
    }
    for b in locals.iter().chain(crosses) {
        if b.block.rows() != b.rows_global_cols.len() || b.block.cols() != b.cols_global_cols.len() {
            return Err(MergeError::DimensionMismatch("block shape differs from its global index lists"));
        }
        if b.rows_global_cols.iter().chain(&b.cols_global_cols).any(|&g| g >= m) {
            return Err(MergeError::DimensionMismatch("global column index beyond total column count"));
        }
    }
    if locals.iter().any(|b| !b.is_local() || b.rows_global_cols != b.cols_global_cols) {
        return Err(MergeError::DimensionMismatch("local block is not a site's own square block"));
    }
    if crosses.iter().any(CovBlock::is_local) {
        return Err(MergeError::DimensionMismatch("cross block pairs a site with itself"));
    }

    let mut owner = vec![false; m];
    for b in locals {
        for &g in &b.rows_global_cols {
            if owner[g] {
                return Err(MergeError::OverlappingPair(g, g));
            }
            owner[g] = true;
        }
    }

    let mut seen = vec![0u8; m * (m + 1) / 2];
    let mut mark = |i: usize, j: usize| -> Result<(), MergeError> {
        let slot = &mut seen[pair_slot(i, j, m)];
        if *slot != 0 {
            return Err(MergeError::OverlappingPair(i.min(j), i.max(j)));
        }
        *slot = 1;
        Ok(())
    };
    for b in locals {
        let g = &b.rows_global_cols;
        for u in 0..g.len() {
            for v in u..g.len() {
                mark(g[u], g[v])?;
            }
        }
    }
    for b in crosses {
        for &i in &b.rows_global_cols {
            for &j in &b.cols_global_cols {
                mark(i, j)?;
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            if seen[pair_slot(i, j, m)] == 0 {
                return Err(MergeError::MissingPair(i, j));
            }
        }
    }

    let mut out = DenseMatrix::zeros(m, m);
    for b in locals.iter().chain(crosses) {
        for (u, &i) in b.rows_global_cols.iter().enumerate() {
            for (v, &j) in b.cols_global_cols.iter().enumerate() {
                let value = b.block.get(u, v);
                out.set(i, j, value);
                out.set(j, i, value);
            }
        }
    }
    Ok(GlobalCovariance { matrix: out, labels: None })
}
