//! The erasure problem for one projection matrix.
//!
//! With original weights `W°` (n×m) and concept embeddings stored column-wise
//! (`C_e`, `C_g` of shape m×n_E, `C_p` of shape m×n_P), the smooth loss is
//!
//! ```text
//! L(W) = λ_e‖W·C_e − W°·C_g‖²_F + λ₁‖W·C_p − W°·C_p‖²_F + λ₂‖W − W°‖²_F
//! ```
//!
//! and the sparse edit minimizes `J(W) = L(W) + λ‖W‖₁,₁`.

use crate::error::{invalid, Result};
use crate::matrix::dense::dot;
use crate::matrix::lu::inverse_checked;
use crate::matrix::{gram_frobenius_norm, spectral_norm_gram, DenseMatrix};
use crate::scalar::Scalar;

/// Erase, guide and preserve embeddings, one concept per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMatrices<T: Scalar> {
    erase: DenseMatrix<T>,
    guide: DenseMatrix<T>,
    preserve: DenseMatrix<T>,
}

impl<T: Scalar> ConceptMatrices<T> {
    pub fn new(erase: DenseMatrix<T>, guide: DenseMatrix<T>, preserve: DenseMatrix<T>) -> Result<Self> {
        if erase.shape() != guide.shape() {
            return invalid(format!(
                "erase concepts {}x{} and guide concepts {}x{} must have the same shape",
                erase.rows(),
                erase.cols(),
                guide.rows(),
                guide.cols()
            ));
        }
        if preserve.rows() != erase.rows() {
            return invalid(format!(
                "preserve concepts have dimension {}, erase concepts {}",
                preserve.rows(),
                erase.rows()
            ));
        }
        Ok(Self { erase, guide, preserve })
    }

    /// Concepts with nothing to preserve.
    pub fn without_preserve(erase: DenseMatrix<T>, guide: DenseMatrix<T>) -> Result<Self> {
        let m = erase.rows();
        Self::new(erase, guide, DenseMatrix::zeros(m, 0))
    }

    pub fn erase(&self) -> &DenseMatrix<T> {
        &self.erase
    }

    pub fn guide(&self) -> &DenseMatrix<T> {
        &self.guide
    }

    pub fn preserve(&self) -> &DenseMatrix<T> {
        &self.preserve
    }

    /// Embedding dimension `m`.
    pub fn dim(&self) -> usize {
        self.erase.rows()
    }

    pub fn n_erase(&self) -> usize {
        self.erase.cols()
    }

    pub fn n_preserve(&self) -> usize {
        self.preserve.cols()
    }

    pub fn cast<U: Scalar>(&self) -> Result<ConceptMatrices<U>> {
        Ok(ConceptMatrices { erase: self.erase.cast()?, guide: self.guide.cast()?, preserve: self.preserve.cast()? })
    }
}

/// Weights applied to the three terms of the smooth loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    /// Preserve-term weight λ₁.
    pub lambda1: T,
    /// Anchor-to-original weight λ₂. Must be positive.
    pub lambda2: T,
    /// Erase-term weight λ_e.
    pub erase_scale: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self { lambda1: T::one(), lambda2: T::one(), erase_scale: T::one() }
    }
}

/// Largest-eigenvalue terms that make up the Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate<T> {
    pub value: T,
    /// `σ_max(C_e·C_eᵀ)`; zero when there is nothing to erase.
    pub erase_gram_norm: T,
    /// `σ_max(C_p·C_pᵀ)`; zero when there is nothing to preserve.
    pub preserve_gram_norm: T,
    /// Power iteration fell back to a Frobenius bound for at least one term.
    pub fallback: bool,
}

/// One layer's problem instance.
#[derive(Debug, Clone)]
pub struct ErasureObjective<T: Scalar> {
    original: DenseMatrix<T>,
    concepts: ConceptMatrices<T>,
    weights: LossWeights<T>,
    // Transposed concepts, so W·C is a row-by-row dot product.
    erase_t: DenseMatrix<T>,
    preserve_t: DenseMatrix<T>,
    // Fixed targets W°·C_g and W°·C_p.
    erase_targets: DenseMatrix<T>,
    preserve_targets: DenseMatrix<T>,
}

impl<T: Scalar> ErasureObjective<T> {
    pub fn new(original: DenseMatrix<T>, concepts: ConceptMatrices<T>, weights: LossWeights<T>) -> Result<Self> {
        if original.cols() != concepts.dim() {
            return invalid(format!(
                "weights have {} columns but concepts have dimension {}",
                original.cols(),
                concepts.dim()
            ));
        }
        let LossWeights { lambda1, lambda2, erase_scale } = weights;
        if !(lambda1.is_finite() && lambda1 >= T::zero()) {
            return invalid(format!("lambda1 must be non-negative, got {lambda1}"));
        }
        if !(lambda2.is_finite() && lambda2 > T::zero()) {
            return invalid(format!("lambda2 must be positive, got {lambda2}"));
        }
        if !(erase_scale.is_finite() && erase_scale > T::zero()) {
            return invalid(format!("erase_scale must be positive, got {erase_scale}"));
        }
        Ok(Self::assemble(original, concepts, weights))
    }

    fn assemble(original: DenseMatrix<T>, concepts: ConceptMatrices<T>, weights: LossWeights<T>) -> Self {
        let erase_t = concepts.erase.transpose();
        let preserve_t = concepts.preserve.transpose();
        let guide_t = concepts.guide.transpose();
        let erase_targets = original.matmul_transpose(&guide_t).expect("shapes validated");
        let preserve_targets = original.matmul_transpose(&preserve_t).expect("shapes validated");
        Self { original, concepts, weights, erase_t, preserve_t, erase_targets, preserve_targets }
    }

    pub fn original(&self) -> &DenseMatrix<T> {
        &self.original
    }

    pub fn concepts(&self) -> &ConceptMatrices<T> {
        &self.concepts
    }

    pub fn weights(&self) -> LossWeights<T> {
        self.weights
    }

    pub fn shape(&self) -> (usize, usize) {
        self.original.shape()
    }

    fn check_shape(&self, w: &DenseMatrix<T>) -> Result<()> {
        if w.shape() != self.original.shape() {
            return invalid(format!(
                "matrix is {}x{}, objective expects {}x{}",
                w.rows(),
                w.cols(),
                self.original.rows(),
                self.original.cols()
            ));
        }
        Ok(())
    }

    /// `W·C_e − W°·C_g` and `W·C_p − W°·C_p`.
    fn residuals(&self, w: &DenseMatrix<T>) -> (DenseMatrix<T>, DenseMatrix<T>) {
        let erase = w.matmul_transpose(&self.erase_t).expect("shape checked");
        let preserve = w.matmul_transpose(&self.preserve_t).expect("shape checked");
        (erase.zip_map(&self.erase_targets, |a, b| a - b), preserve.zip_map(&self.preserve_targets, |a, b| a - b))
    }

    /// Smooth part `L(W)` of the objective.
    pub fn smooth_loss(&self, w: &DenseMatrix<T>) -> Result<T> {
        self.check_shape(w)?;
        let (re, rp) = self.residuals(w);
        let anchor: T = w.data().iter().zip(self.original.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let LossWeights { lambda1, lambda2, erase_scale } = self.weights;
        Ok(erase_scale * re.frobenius_norm_squared() + lambda1 * rp.frobenius_norm_squared() + lambda2 * anchor)
    }

    /// `J(W) = L(W) + λ‖W‖₁,₁`.
    pub fn total_objective(&self, w: &DenseMatrix<T>, lambda: T) -> Result<T> {
        if lambda.is_nan() || lambda < T::zero() {
            return invalid(format!("lambda must be non-negative, got {lambda}"));
        }
        Ok(self.smooth_loss(w)? + lambda * w.entrywise_l1_norm())
    }

    /// `∇L(W) = 2λ_e(W·C_e − W°·C_g)·C_eᵀ + 2λ₁(W·C_p − W°·C_p)·C_pᵀ + 2λ₂(W − W°)`.
    pub fn gradient(&self, w: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_shape(w)?;
        let mut data = Vec::with_capacity(w.len());
        self.gradient_rows(w, |_, g| data.extend_from_slice(g));
        Ok(DenseMatrix::from_raw(w.rows(), w.cols(), data))
    }

    /// Hands each row of `∇L(W)` to `f` in order, one row buffer at a time.
    /// `w` must have the objective's shape.
    pub(crate) fn gradient_rows(&self, w: &DenseMatrix<T>, mut f: impl FnMut(usize, &[T])) {
        let LossWeights { lambda1, lambda2, erase_scale } = self.weights;
        let two = T::two();
        let n_preserve = if lambda1 == T::zero() { 0 } else { self.concepts.n_preserve() };
        let mut erase_res = vec![T::zero(); self.concepts.n_erase()];
        let mut preserve_res = vec![T::zero(); n_preserve];
        let mut g = vec![T::zero(); w.cols()];
        for i in 0..w.rows() {
            let row = w.row(i);
            for (j, r) in erase_res.iter_mut().enumerate() {
                *r = two * erase_scale * (dot(row, self.erase_t.row(j)) - self.erase_targets.get(i, j));
            }
            for (j, r) in preserve_res.iter_mut().enumerate() {
                *r = two * lambda1 * (dot(row, self.preserve_t.row(j)) - self.preserve_targets.get(i, j));
            }
            for ((gk, &x), &x0) in g.iter_mut().zip(row).zip(self.original.row(i)) {
                *gk = two * lambda2 * (x - x0);
            }
            for (terms, concepts) in [(&erase_res, &self.erase_t), (&preserve_res, &self.preserve_t)] {
                for (j, &r) in terms.iter().enumerate() {
                    for (gk, &c) in g.iter_mut().zip(concepts.row(j)) {
                        *gk += r * c;
                    }
                }
            }
            f(i, &g);
        }
    }

    /// Unique minimizer of the smooth loss:
    /// `W°·(λ_e·C_g·C_eᵀ + λ₁·C_p·C_pᵀ + λ₂·I)·(λ_e·C_e·C_eᵀ + λ₁·C_p·C_pᵀ + λ₂·I)⁻¹`.
    pub fn closed_form_uce(&self) -> Result<DenseMatrix<T>> {
        let LossWeights { lambda1, lambda2, erase_scale } = self.weights;
        let c = &self.concepts;
        let m = c.dim();

        let mut system = DenseMatrix::identity(m).scale(lambda2);
        system.add_scaled(erase_scale, &c.erase.matmul_transpose(&c.erase)?)?;
        system.add_scaled(lambda1, &c.preserve.matmul_transpose(&c.preserve)?)?;

        // W°·numerator, assembled from the low-rank targets.
        let mut rhs = self.original.scale(lambda2);
        rhs.add_scaled(erase_scale, &self.erase_targets.matmul(&self.erase_t)?)?;
        rhs.add_scaled(lambda1, &self.preserve_targets.matmul(&self.preserve_t)?)?;

        let inverse = inverse_checked(&system)?;
        let w = rhs.matmul(&inverse)?;
        w.ensure_finite("closed-form solution")?;
        Ok(w)
    }

    /// `L = 2(λ_e·σ_max(C_e·C_eᵀ) + λ₁·σ_max(C_p·C_pᵀ) + λ₂)`.
    pub fn lipschitz_constant(&self) -> T {
        self.lipschitz_estimate().value
    }

    pub fn lipschitz_estimate(&self) -> LipschitzEstimate<T> {
        let LossWeights { lambda1, lambda2, erase_scale } = self.weights;
        let gram = |c: &DenseMatrix<T>| {
            if c.is_empty() {
                (T::zero(), false)
            } else {
                let est = spectral_norm_gram(c).expect("non-empty");
                (est.value, est.fallback)
            }
        };
        let (erase_gram_norm, f1) = gram(&self.concepts.erase);
        let (preserve_gram_norm, f2) = gram(&self.concepts.preserve);
        LipschitzEstimate {
            value: T::two() * (erase_scale * erase_gram_norm + lambda1 * preserve_gram_norm + lambda2),
            erase_gram_norm,
            preserve_gram_norm,
            fallback: f1 || f2,
        }
    }

    /// The looser constant `2‖λ_e·C_e·C_eᵀ + λ₁·C_p·C_pᵀ + λ₂·I‖_F`.
    ///
    /// Also a valid Lipschitz constant; using it gives a smaller step.
    pub fn frobenius_lipschitz_bound(&self) -> Result<T> {
        let LossWeights { lambda1, lambda2, erase_scale } = self.weights;
        let c = &self.concepts;
        let m = c.dim();
        // [√λ_e·C_e, √λ₁·C_p] stacked column-wise gives the combined Gram.
        let mut combined = DenseMatrix::zeros(m, c.n_erase() + c.n_preserve());
        let cols = combined.cols();
        let se = erase_scale.sqrt();
        let sp = lambda1.sqrt();
        {
            let data = combined.data_mut();
            for i in 0..m {
                for j in 0..c.n_erase() {
                    data[i * cols + j] = se * c.erase.get(i, j);
                }
                for j in 0..c.n_preserve() {
                    data[i * cols + c.n_erase() + j] = sp * c.preserve.get(i, j);
                }
            }
        }
        if cols == 0 {
            return Ok(T::two() * lambda2 * T::from_usize(m).unwrap().sqrt());
        }
        // ‖G + λ₂I‖²_F = ‖G‖²_F + 2λ₂·tr(G) + m·λ₂².
        let g_fro = gram_frobenius_norm(&combined)?;
        let trace = combined.frobenius_norm_squared();
        let m_t = T::from_usize(m).unwrap();
        let sq = g_fro * g_fro + T::two() * lambda2 * trace + m_t * lambda2 * lambda2;
        Ok(T::two() * sq.sqrt())
    }

    /// `max |∇L(0)_ij|`. For any `λ` at or above this value the zero matrix
    /// minimizes `J`.
    pub fn zero_solution_threshold(&self) -> T {
        let zero = DenseMatrix::zeros(self.original.rows(), self.original.cols());
        self.gradient(&zero).expect("shape matches").max_abs()
    }

    pub fn cast<U: Scalar>(&self) -> Result<ErasureObjective<U>> {
        let cast = |x: T| U::from_f64_lossy(x.to_f64_lossy());
        ErasureObjective::new(
            self.original.cast()?,
            self.concepts.cast()?,
            LossWeights {
                lambda1: cast(self.weights.lambda1),
                lambda2: cast(self.weights.lambda2),
                erase_scale: cast(self.weights.erase_scale),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SpaceError;

    fn mat(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
        // Small deterministic pseudo-random fill; the statistics do not matter here.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DenseMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .unwrap()
    }

    fn objective(n: usize, m: usize, ne: usize, np: usize, seed: u64) -> ErasureObjective<f64> {
        let concepts = ConceptMatrices::new(mat(m, ne, seed + 1), mat(m, ne, seed + 2), mat(m, np, seed + 3)).unwrap();
        ErasureObjective::new(mat(n, m, seed), concepts, LossWeights::default()).unwrap()
    }

    #[test]
    fn validation() {
        let c = ConceptMatrices::without_preserve(mat(4, 1, 1), mat(4, 1, 2)).unwrap();
        assert!(ErasureObjective::new(mat(3, 5, 0), c.clone(), LossWeights::default()).is_err());
        let bad = LossWeights { lambda2: 0.0, ..LossWeights::default() };
        assert!(ErasureObjective::new(mat(3, 4, 0), c.clone(), bad).is_err());
        let bad = LossWeights { lambda1: -1.0, ..LossWeights::default() };
        assert!(ErasureObjective::new(mat(3, 4, 0), c.clone(), bad).is_err());
        let bad = LossWeights { erase_scale: 0.0, ..LossWeights::default() };
        assert!(ErasureObjective::new(mat(3, 4, 0), c, bad).is_err());
        assert!(ConceptMatrices::new(mat(4, 1, 1), mat(4, 2, 2), mat(4, 0, 3)).is_err());
        assert!(ConceptMatrices::new(mat(4, 1, 1), mat(4, 1, 2), mat(5, 1, 3)).is_err());
    }

    #[test]
    fn loss_vanishes_when_guide_equals_target() {
        let ce = mat(6, 2, 11);
        let concepts = ConceptMatrices::new(ce.clone(), ce, mat(6, 3, 12)).unwrap();
        let obj = ErasureObjective::new(mat(5, 6, 13), concepts, LossWeights::default()).unwrap();
        assert_eq!(obj.smooth_loss(obj.original()).unwrap(), 0.0);
        let g = obj.gradient(obj.original()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let w = obj.closed_form_uce().unwrap();
        let rel = w.sub(obj.original()).unwrap().frobenius_norm() / obj.original().frobenius_norm();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn loss_at_original_is_erase_gap() {
        let obj = objective(4, 6, 2, 3, 21);
        let c = obj.concepts();
        let gap = obj.original().matmul(&c.erase().sub(c.guide()).unwrap()).unwrap();
        let expect = gap.frobenius_norm_squared();
        let got = obj.smooth_loss(obj.original()).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn total_objective_components() {
        let obj = objective(4, 6, 2, 3, 31);
        let w = mat(4, 6, 99);
        assert_eq!(obj.total_objective(&w, 0.0).unwrap(), obj.smooth_loss(&w).unwrap());
        let zero = DenseMatrix::zeros(4, 6);
        assert_eq!(obj.total_objective(&zero, 3.0).unwrap(), obj.smooth_loss(&zero).unwrap());
        assert!(obj.total_objective(&w, -1.0).is_err());
        assert!(matches!(obj.smooth_loss(&mat(3, 6, 1)), Err(SpaceError::InvalidInput(_))));
        assert!(obj.gradient(&mat(4, 5, 1)).is_err());
    }

    #[test]
    fn gradient_at_zero_without_regularizers() {
        let concepts = ConceptMatrices::new(mat(6, 2, 41), mat(6, 2, 42), mat(6, 2, 43)).unwrap();
        let mut obj = ErasureObjective::new(mat(3, 6, 44), concepts, LossWeights::default()).unwrap();
        obj.weights.lambda1 = 0.0;
        obj.weights.lambda2 = 0.0;
        let g = obj.gradient(&DenseMatrix::zeros(3, 6)).unwrap();
        let c = obj.concepts();
        let expect = obj.original().matmul(c.guide()).unwrap().matmul_transpose(c.erase()).unwrap().scale(-2.0);
        assert!(g.sub(&expect).unwrap().max_abs() < 1e-14);
        let threshold = obj.zero_solution_threshold();
        assert!((threshold - expect.max_abs()).abs() < 1e-14);
    }

    #[test]
    fn closed_form_with_nothing_to_edit_is_identity_map() {
        let concepts = ConceptMatrices::new(mat(5, 0, 1), mat(5, 0, 2), mat(5, 0, 3)).unwrap();
        let obj = ErasureObjective::new(mat(4, 5, 7), concepts, LossWeights::default()).unwrap();
        let w = obj.closed_form_uce().unwrap();
        assert!(w.sub(obj.original()).unwrap().max_abs() < 1e-15);
        assert_eq!(obj.lipschitz_constant(), 2.0);
        assert_eq!(obj.zero_solution_threshold(), 2.0 * obj.original().max_abs());
    }

    #[test]
    fn lipschitz_unit_erase_column() {
        let ce = DenseMatrix::new(3, 1, vec![0.6, 0.0, 0.8]).unwrap();
        let concepts = ConceptMatrices::without_preserve(ce, mat(3, 1, 5)).unwrap();
        let obj = ErasureObjective::new(mat(2, 3, 6), concepts, LossWeights::default()).unwrap();
        assert!((obj.lipschitz_constant() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_is_stationary() {
        let obj = objective(4, 6, 2, 3, 51);
        let w = obj.closed_form_uce().unwrap();
        let g0 = obj.gradient(obj.original()).unwrap().frobenius_norm();
        let g = obj.gradient(&w).unwrap().frobenius_norm();
        assert!(g <= 1e-9 * g0, "{g} vs {g0}");
    }

    #[test]
    fn erase_scale_reweights_the_erase_term() {
        let base = objective(4, 6, 2, 1, 61);
        let mut scaled = base.clone();
        scaled.weights.erase_scale = 3.0;
        let w = mat(4, 6, 62);
        let (re, rp) = base.residuals(&w);
        let anchor = w.sub(base.original()).unwrap().frobenius_norm_squared();
        let expect = 3.0 * re.frobenius_norm_squared() + rp.frobenius_norm_squared() + anchor;
        assert!((scaled.smooth_loss(&w).unwrap() - expect).abs() < 1e-12 * expect);
        let g = scaled.gradient(&scaled.closed_form_uce().unwrap()).unwrap();
        assert!(g.frobenius_norm() < 1e-9 * scaled.gradient(scaled.original()).unwrap().frobenius_norm());
    }

    /// With no preserve set and no anchor, a square invertible `C_e` makes the
    /// erase term interpolate exactly: `W·C_e = W°·C_g`.
    #[test]
    fn exact_interpolation_without_anchor() {
        let m = 5;
        let ce = mat(m, m, 71).add(&DenseMatrix::identity(m).scale(3.0)).unwrap();
        let cg = mat(m, m, 72);
        let w0 = mat(4, m, 73);
        let concepts = ConceptMatrices::without_preserve(ce.clone(), cg.clone()).unwrap();
        let mut obj = ErasureObjective::assemble(w0.clone(), concepts, LossWeights::default());
        obj.weights.lambda2 = 0.0;
        let w = obj.closed_form_uce().unwrap();

        // Oracle: solve W·C_e = W°·C_g by Gaussian elimination on C_eᵀ·Wᵀ = (W°·C_g)ᵀ.
        let target = w0.matmul(&cg).unwrap();
        let oracle = solve_right(&ce, &target);
        let rel = w.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
        assert!(rel <= 1e-9, "{rel}");
        let interp = w.matmul(&ce).unwrap().sub(&target).unwrap().frobenius_norm() / target.frobenius_norm();
        assert!(interp <= 1e-9, "{interp}");
    }

    /// Naive Gauss-Jordan for `X·A = B`, independent of the LU code path.
    fn solve_right(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let n = a.rows();
        let at = a.transpose();
        let bt = b.transpose();
        let mut aug: Vec<Vec<f64>> = (0..n).map(|i| at.row(i).iter().chain(bt.row(i)).copied().collect()).collect();
        for col in 0..n {
            let p = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
            aug.swap(col, p);
            let piv = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != col {
                    let f = aug[r][col];
                    let pivot_row = aug[col].clone();
                    for (v, &p) in aug[r].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        let xt = DenseMatrix::from_fn(n, bt.cols(), |i, j| aug[i][n + j]).unwrap();
        xt.transpose()
    }
}
