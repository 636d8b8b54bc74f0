//! Compressed sparse row matrices and a symmetric positive definite direct solver.
//!
//! This is deliberately small: the deformation engine needs triplet assembly,
//! sparse-sparse and sparse-dense products, transposes, and a Cholesky factor
//! that is computed once and reused for every solve of the optimization loop.

mod cg;
mod cholesky;

pub use cg::{conjugate_gradient, CgReport};
pub use cholesky::SpdFactor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric positive definite: pivot {pivot} is {value:e}")]
    NotSpd { pivot: usize, value: f64 },
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Row-major compressed sparse matrix of `f64`.
///
/// Column indices are sorted and unique within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Dense row-major block, used for multi-column right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, SparseError> {
        if data.len() != rows * cols {
            return Err(SparseError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} block",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, v) in values.iter().enumerate() {
            self.set(r, c, *v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, v) in entries {
            if r >= rows || c >= cols {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite("triplet value"));
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, then sort + merge within each row
        let mut next = counts.clone();
        let mut cols_tmp = vec![0usize; entries.len()];
        let mut vals_tmp = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            let p = next[r];
            cols_tmp[p] = c;
            vals_tmp[p] = v;
            next[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|p| (cols_tmp[p], vals_tmp[p])));
            scratch.sort_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_indices.len() > row_offsets[r] && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in order, so the transposed rows come out sorted
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let p = next[c];
                col_indices[p] = r;
                values[p] = v;
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Sparse-sparse product `self * rhs`.
    pub fn multiply(&self, rhs: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        if self.cols != rhs.rows {
            return Err(SparseError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut row_offsets = Vec::with_capacity(self.rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        let mut acc = vec![0.0; rhs.cols];
        let mut marker = vec![usize::MAX; rhs.cols];
        let mut pattern: Vec<usize> = Vec::new();
        for r in 0..self.rows {
            pattern.clear();
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                col_indices.push(c);
                values.push(acc[c]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: rhs.cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse-dense product `self * rhs`.
    pub fn multiply_dense(&self, rhs: &DenseBlock) -> Result<DenseBlock, SparseError> {
        if self.cols != rhs.rows {
            return Err(SparseError::DimensionMismatch(format!(
                "{}x{} times dense {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let k = rhs.cols;
        let mut out = DenseBlock::zeros(self.rows, k);
        for r in 0..self.rows {
            let dst = &mut out.data[r * k..(r + 1) * k];
            for (c, a) in self.row(r) {
                let src = &rhs.data[c * k..(c + 1) * k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if self.cols != x.len() {
            return Err(SparseError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect())
    }

    /// Scales row `r` by `scale[r]` (left multiplication by a diagonal).
    pub fn scale_rows(&self, scale: &[f64]) -> Result<SparseMatrix, SparseError> {
        if scale.len() != self.rows {
            return Err(SparseError::DimensionMismatch(format!(
                "row scale of length {} for {} rows",
                scale.len(),
                self.rows
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for p in self.row_offsets[r]..self.row_offsets[r + 1] {
                out.values[p] *= scale[r];
            }
        }
        Ok(out)
    }

    /// Keeps the rows and columns listed in `keep` (in that order).
    pub fn submatrix(&self, keep_rows: &[usize], keep_cols: &[usize]) -> SparseMatrix {
        let mut col_map = vec![usize::MAX; self.cols];
        for (new, &old) in keep_cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &old_r) in keep_rows.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if col_map[c] != usize::MAX {
                    triplets.push((new_r, col_map[c], v));
                }
            }
        }
        SparseMatrix::from_triplets(keep_rows.len(), keep_cols.len(), &triplets)
            .expect("submatrix indices are in range by construction")
    }

    /// Largest `|A_ij - A_ji|`; `None` if the matrix is not square.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        Some(worst)
    }
}
