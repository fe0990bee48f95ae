//! Largest eigenvalue of a Gram matrix `C·Cᵀ` by power iteration.

use crate::error::{invalid, Result};
use crate::matrix::dense::dot;
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Relative change between successive Rayleigh quotients at which the
/// iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate<T> {
    /// `σ_max(C·Cᵀ)`, or `‖C·Cᵀ‖_F` when `fallback` is set.
    pub value: T,
    pub iterations: usize,
    /// Power iteration did not converge and `value` is the Frobenius upper
    /// bound instead.
    pub fallback: bool,
}

/// Computes `σ_max(C·Cᵀ) = σ_max(C)²` by power iteration on `v ↦ C(Cᵀv)`.
///
/// Starts from the normalized all-ones vector. If that vector lies in the null
/// space of the Gram operator, the iteration restarts from the basis vector of
/// the row of `C` with the largest norm. On non-convergence the Frobenius norm
/// of `C·Cᵀ`, an upper bound on the spectral norm, is returned instead.
pub fn spectral_norm_gram<T: Scalar>(c: &DenseMatrix<T>) -> Result<SpectralEstimate<T>> {
    spectral_norm_gram_with(c, POWER_ITERATION_MAX_ITERS)
}

pub(crate) fn spectral_norm_gram_with<T: Scalar>(c: &DenseMatrix<T>, max_iters: usize) -> Result<SpectralEstimate<T>> {
    if c.rows() == 0 || c.cols() == 0 {
        return invalid(format!("spectral norm of an empty {}x{} matrix", c.rows(), c.cols()));
    }
    if c.max_abs() == T::zero() {
        return Ok(SpectralEstimate { value: T::zero(), iterations: 0, fallback: false });
    }
    let tol = T::from_f64_lossy(POWER_ITERATION_TOL).max(T::epsilon() * T::from_f64_lossy(16.0));

    let m = c.rows();
    let ones = vec![T::one() / T::from_usize(m).unwrap().sqrt(); m];
    let mut v = ones;
    let mut w = gram_apply(c, &v);
    if norm(&w) == T::zero() {
        let heaviest = (0..m)
            .max_by(|&a, &b| {
                let na = dot(c.row(a), c.row(a));
                let nb = dot(c.row(b), c.row(b));
                na.partial_cmp(&nb).unwrap()
            })
            .unwrap();
        v = vec![T::zero(); m];
        v[heaviest] = T::one();
        w = gram_apply(c, &v);
    }

    let mut rayleigh = dot(&v, &w);
    for it in 1..=max_iters {
        let wn = norm(&w);
        if wn == T::zero() {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = *wi / wn;
        }
        w = gram_apply(c, &v);
        let next = dot(&v, &w);
        let change = (next - rayleigh).abs();
        rayleigh = next;
        if change <= tol * rayleigh.abs() {
            return Ok(SpectralEstimate { value: rayleigh, iterations: it, fallback: false });
        }
    }
    Ok(SpectralEstimate { value: gram_frobenius_norm(c)?, iterations: max_iters, fallback: true })
}

/// `‖C·Cᵀ‖_F`, computed through the smaller Gram matrix `Cᵀ·C` (same nonzero
/// spectrum).
pub fn gram_frobenius_norm<T: Scalar>(c: &DenseMatrix<T>) -> Result<T> {
    let small = if c.cols() <= c.rows() { c.transpose_matmul(c)? } else { c.matmul_transpose(c)? };
    Ok(small.frobenius_norm())
}

fn gram_apply<T: Scalar>(c: &DenseMatrix<T>, v: &[T]) -> Vec<T> {
    let ct_v = c.transpose_matvec(v).expect("length checked by caller");
    c.matvec(&ct_v).expect("length checked by caller")
}

fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
