//! LU factorization with partial pivoting for the closed-form edit.

use crate::error::{invalid, Result, SpaceError};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Condition-number estimate above which a system is rejected as singular.
pub const MAX_CONDITION: f64 = 1e14;

pub struct Lu<T> {
    n: usize,
    /// Unit-lower `L` below the diagonal, `U` on and above it.
    factors: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return invalid(format!("LU of a non-square {}x{} matrix", a.rows(), a.cols()));
        }
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot_row =
                (k..n).max_by(|&i, &j| lu[i * n + k].abs().partial_cmp(&lu[j * n + k].abs()).unwrap()).unwrap();
            if lu[pivot_row * n + k] == T::zero() {
                return Err(SpaceError::IllConditioned { condition: f64::INFINITY });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= factor * u;
                }
            }
        }
        Ok(Self { n, factors: lu, perm })
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.factors[i * n..i * n + i];
            let s: T = row.iter().zip(&x[..i]).map(|(&a, &b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.factors[i * n + i + 1..(i + 1) * n];
            let s: T = row.iter().zip(&x[i + 1..]).map(|(&a, &b)| a * b).sum();
            x[i] = (x[i] - s) / self.factors[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.n;
        let mut inv_t = vec![T::zero(); n * n];
        for j in 0..n {
            let col = &mut inv_t[j * n..(j + 1) * n];
            col[j] = T::one();
            self.solve_in_place(col);
        }
        // Columns were solved into rows; transpose back.
        DenseMatrix::from_raw(n, n, inv_t).transpose()
    }
}

/// Maximum absolute column sum.
pub fn one_norm<T: Scalar>(a: &DenseMatrix<T>) -> T {
    (0..a.cols()).map(|j| (0..a.rows()).map(|i| a.get(i, j).abs()).sum::<T>()).fold(T::zero(), T::max)
}

/// Inverts `a`, failing when `‖a‖₁·‖a⁻¹‖₁` exceeds [`MAX_CONDITION`].
pub fn inverse_checked<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let inv = Lu::factor(a)?.inverse();
    let condition = (one_norm(a) * one_norm(&inv)).to_f64_lossy();
    if !condition.is_finite() || condition > MAX_CONDITION || !inv.is_finite() {
        return Err(SpaceError::IllConditioned { condition });
    }
    Ok(inv)
}
