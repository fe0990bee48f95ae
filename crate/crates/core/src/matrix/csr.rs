use crate::error::{format_err, Result, SpaceError};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Canonical compressed-sparse-row matrix with 32-bit indices.
///
/// Canonical means: `row_ptr` starts at 0, is non-decreasing and ends at
/// `nnz`; column indices are strictly increasing within a row; no stored value
/// is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Assembles a matrix from raw arrays, checking every canonical-form
    /// invariant.
    pub fn from_parts(rows: usize, cols: usize, row_ptr: Vec<u32>, col_idx: Vec<u32>, values: Vec<T>) -> Result<Self> {
        let m = Self { rows, cols, row_ptr, col_idx, values };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.rows + 1 {
            return format_err(format!("row_ptr has {} entries, expected {}", self.row_ptr.len(), self.rows + 1));
        }
        if self.col_idx.len() != self.values.len() {
            return format_err(format!("{} column indices but {} values", self.col_idx.len(), self.values.len()));
        }
        if self.row_ptr[0] != 0 {
            return format_err("row_ptr[0] must be 0");
        }
        if self.row_ptr[self.rows] as usize != self.values.len() {
            return format_err(format!("row_ptr[rows] = {} but nnz = {}", self.row_ptr[self.rows], self.values.len()));
        }
        for (i, w) in self.row_ptr.windows(2).enumerate() {
            if w[1] < w[0] {
                return format_err(format!("row_ptr decreases at row {i}"));
            }
            let cols_in_row = &self.col_idx[w[0] as usize..w[1] as usize];
            for (k, &c) in cols_in_row.iter().enumerate() {
                if c as usize >= self.cols {
                    return format_err(format!("row {i}: column {c} out of range"));
                }
                if k > 0 && cols_in_row[k - 1] >= c {
                    return format_err(format!("row {i}: column indices not strictly increasing"));
                }
            }
        }
        for (k, v) in self.values.iter().enumerate() {
            if *v == T::zero() {
                return format_err(format!("explicit zero stored at position {k}"));
            }
            if !v.is_finite() {
                return format_err(format!("non-finite value stored at position {k}"));
            }
        }
        Ok(())
    }

    /// Encodes the nonzero entries of `m`.
    pub fn from_dense(m: &DenseMatrix<T>) -> Result<Self> {
        if m.rows() > u32::MAX as usize || m.cols() > u32::MAX as usize {
            return Err(SpaceError::Capacity(format!("shape {}x{} exceeds 32-bit indexing", m.rows(), m.cols())));
        }
        let nnz = m.nnz();
        if nnz > u32::MAX as usize {
            return Err(SpaceError::Capacity(format!("{nnz} nonzeros exceed 32-bit offsets")));
        }
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0u32);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != T::zero() {
                    col_idx.push(j as u32);
                    values.push(v);
                }
            }
            row_ptr.push(values.len() as u32);
        }
        Ok(Self { rows: m.rows(), cols: m.cols(), row_ptr, col_idx, values })
    }

    pub fn to_dense(&self) -> Result<DenseMatrix<T>> {
        self.validate()?;
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        let cols = self.cols;
        let data = out.data_mut();
        for i in 0..self.rows {
            let (start, end) = (self.row_ptr[i] as usize, self.row_ptr[i + 1] as usize);
            for k in start..end {
                data[i * cols + self.col_idx[k] as usize] = self.values[k];
            }
        }
        Ok(out)
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

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sparsity_fraction(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            return 1.0;
        }
        (total - self.nnz()) as f64 / total as f64
    }
}

/// Free-function form of [`CsrMatrix::from_dense`].
pub fn dense_to_csr<T: Scalar>(m: &DenseMatrix<T>) -> Result<CsrMatrix<T>> {
    CsrMatrix::from_dense(m)
}

/// Free-function form of [`CsrMatrix::to_dense`].
pub fn csr_to_dense<T: Scalar>(s: &CsrMatrix<T>) -> Result<DenseMatrix<T>> {
    s.to_dense()
}
