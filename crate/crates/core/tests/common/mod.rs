//! Random instances and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use space_core::storage::{default_blocks, LayerInfo, ProjectionKind, WeightBundle};
use space_core::{ConceptMatrices, DenseMatrix, ErasureObjective, LossWeights};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix<f64> {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

pub struct Instance {
    pub objective: ErasureObjective<f64>,
    pub n_erase: usize,
    pub n_preserve: usize,
}

/// `W°` is `rows × dim` with N(0, 1/dim) entries; concept columns are N(0, 1)
/// scaled by `concept_scale`.
pub fn instance(
    seed: u64,
    rows: usize,
    dim: usize,
    n_erase: usize,
    n_preserve: usize,
    concept_scale: f64,
    weights: LossWeights<f64>,
) -> Instance {
    let mut r = rng(seed);
    let w0 = gaussian(&mut r, rows, dim, 1.0 / (dim as f64).sqrt());
    let ce = gaussian(&mut r, dim, n_erase, concept_scale);
    let cg = gaussian(&mut r, dim, n_erase, concept_scale);
    let cp = gaussian(&mut r, dim, n_preserve, concept_scale);
    let concepts = ConceptMatrices::new(ce, cg, cp).unwrap();
    Instance { objective: ErasureObjective::new(w0, concepts, weights).unwrap(), n_erase, n_preserve }
}

/// Instance with shapes drawn uniformly up to the given bounds.
pub fn random_instance(seed: u64, max_rows: usize, max_dim: usize, max_e: usize, max_p: usize) -> Instance {
    let mut r = rng(seed ^ 0x5eed);
    let rows = r.random_range(1..=max_rows);
    let dim = r.random_range(1..=max_dim);
    let n_e = r.random_range(1..=max_e);
    let n_p = r.random_range(0..=max_p);
    instance(seed, rows, dim, n_e, n_p, 1.0, LossWeights::default())
}

pub fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]).unwrap()
}

pub fn rel_frobenius(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let denom = b.frobenius_norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Closed-form minimizer of the smooth loss solved with nalgebra's LU.
pub fn closed_form_oracle(obj: &ErasureObjective<f64>) -> DenseMatrix<f64> {
    let c = obj.concepts();
    let w = obj.weights();
    let (ce, cg, cp) = (to_na(c.erase()), to_na(c.guide()), to_na(c.preserve()));
    let m = c.dim();
    let eye = DMatrix::<f64>::identity(m, m);
    let num = &cg * ce.transpose() * w.erase_scale + &cp * cp.transpose() * w.lambda1 + &eye * w.lambda2;
    let den = &ce * ce.transpose() * w.erase_scale + &cp * cp.transpose() * w.lambda1 + &eye * w.lambda2;
    // W = W°·num·den⁻¹  ⇔  denᵀ·Wᵀ = numᵀ·W°ᵀ
    let rhs = num.transpose() * to_na(obj.original()).transpose();
    let wt = den.transpose().lu().solve(&rhs).expect("regular system");
    from_na(&wt.transpose())
}

/// Largest singular value of `c`, squared, from a full SVD.
pub fn gram_norm_oracle(c: &DenseMatrix<f64>) -> f64 {
    let s = to_na(c).singular_values();
    let top = s.iter().cloned().fold(0.0, f64::max);
    top * top
}

/// Lipschitz constant with spectral norms from the SVD.
pub fn lipschitz_oracle(obj: &ErasureObjective<f64>) -> f64 {
    let w = obj.weights();
    let c = obj.concepts();
    let e = if c.n_erase() == 0 { 0.0 } else { gram_norm_oracle(c.erase()) };
    let p = if c.n_preserve() == 0 { 0.0 } else { gram_norm_oracle(c.preserve()) };
    2.0 * (w.erase_scale * e + w.lambda1 * p + w.lambda2)
}

/// Random bundle over the default blocks with roughly `zero_fraction` exact
/// zeros. Shapes may be empty in one dimension when `allow_empty` is set.
pub fn random_bundle(seed: u64, layers: usize, max_side: usize, zero_fraction: f64, allow_empty: bool) -> WeightBundle {
    let mut r = rng(seed);
    let blocks = default_blocks();
    let mut bundle = WeightBundle::new(blocks.clone());
    let low = if allow_empty { 0 } else { 1 };
    for i in 0..layers {
        let rows = r.random_range(low..=max_side);
        let cols = r.random_range(low..=max_side);
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| if r.random::<f64>() < zero_fraction { 0.0 } else { r.sample::<f32, _>(StandardNormal) })
            .collect();
        let kind = match i % 3 {
            0 => Some(ProjectionKind::K),
            1 => Some(ProjectionKind::V),
            _ => None,
        };
        let block = &blocks[r.random_range(0..blocks.len())];
        let info = LayerInfo::new(format!("layer{i}"), block.clone(), kind);
        bundle.push(info, DenseMatrix::new(rows, cols, data).unwrap()).unwrap();
    }
    bundle
}

/// Largest zero-solution threshold over the layers of a bundle.
pub fn instance_threshold(
    bundle: &WeightBundle,
    concepts: &ConceptMatrices<f64>,
    cfg: &space_core::harness::RunConfig,
) -> f64 {
    bundle
        .layers
        .iter()
        .map(|l| {
            ErasureObjective::new(l.matrix.cast().unwrap(), concepts.clone(), cfg.params.weights())
                .unwrap()
                .zero_solution_threshold()
        })
        .fold(0.0, f64::max)
}
