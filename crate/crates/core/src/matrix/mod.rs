//! Dense and CSR matrices, norms, and spectral quantities.

mod csr;
pub(crate) mod dense;
pub mod lu;
pub mod spectral;

pub use csr::{csr_to_dense, dense_to_csr, CsrMatrix};
pub use dense::DenseMatrix;
pub use spectral::{gram_frobenius_norm, spectral_norm_gram, SpectralEstimate};

use crate::scalar::Scalar;

pub fn frobenius_norm<T: Scalar>(m: &DenseMatrix<T>) -> T {
    m.frobenius_norm()
}

pub fn entrywise_l1_norm<T: Scalar>(m: &DenseMatrix<T>) -> T {
    m.entrywise_l1_norm()
}

pub fn sparsity_fraction<T: Scalar>(m: &DenseMatrix<T>) -> f64 {
    m.sparsity_fraction()
}
