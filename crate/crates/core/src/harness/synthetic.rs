//! Seeded synthetic weights and concept embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;
use crate::objective::ConceptMatrices;
use crate::storage::{default_blocks, LayerInfo, ProjectionKind, WeightBundle};

/// Embedding width of the reference text encoder.
pub const REFERENCE_EMBEDDING_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub info: LayerInfo,
    pub rows: usize,
}

/// Shapes and seed for a synthetic weight bundle. Every layer has `dim`
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWeights {
    pub seed: u64,
    pub dim: usize,
    pub blocks: Vec<String>,
    pub layers: Vec<LayerSpec>,
}

impl SyntheticWeights {
    /// K and V projections of the sixteen cross-attention layers of an SD-1.x
    /// U-Net (32 matrices), with row counts 320/640/1280 and embedding width
    /// 768 divided by `scale`.
    pub fn sd_miniature(scale: usize, seed: u64) -> Result<Self> {
        if scale == 0 {
            return invalid("scale must be at least 1");
        }
        let down = [320, 320, 640, 640, 1280, 1280];
        let mid = [1280];
        let up = [1280, 1280, 1280, 640, 640, 640, 320, 320, 320];
        let mut layers = Vec::with_capacity(32);
        for (block, widths) in [("down", &down[..]), ("mid", &mid[..]), ("up", &up[..])] {
            for (i, &w) in widths.iter().enumerate() {
                for (kind, suffix) in [(ProjectionKind::K, "to_k"), (ProjectionKind::V, "to_v")] {
                    layers.push(LayerSpec {
                        info: LayerInfo::new(format!("{block}.{i}.attn2.{suffix}"), block, Some(kind)),
                        rows: (w / scale).max(1),
                    });
                }
            }
        }
        Ok(Self { seed, dim: (REFERENCE_EMBEDDING_DIM / scale).max(1), blocks: default_blocks(), layers })
    }

    /// `count` layers of identical shape spread round-robin over the default
    /// blocks.
    pub fn uniform(count: usize, rows: usize, dim: usize, seed: u64) -> Self {
        let blocks = default_blocks();
        let layers = (0..count)
            .map(|i| {
                let block = &blocks[i % blocks.len()];
                let kind = if i % 2 == 0 { ProjectionKind::K } else { ProjectionKind::V };
                LayerSpec {
                    info: LayerInfo::new(
                        format!("{block}.{i}.attn2.to_{}", kind.to_string().to_lowercase()),
                        block.clone(),
                        Some(kind),
                    ),
                    rows,
                }
            })
            .collect();
        Self { seed, dim, blocks, layers }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConcepts {
    pub seed: u64,
    pub dim: usize,
    pub n_erase: usize,
    pub n_preserve: usize,
    pub unit_normalize: bool,
}

impl SyntheticConcepts {
    pub fn new(seed: u64, dim: usize, n_erase: usize, n_preserve: usize) -> Self {
        Self { seed, dim, n_erase, n_preserve, unit_normalize: true }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix<f64> {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DenseMatrix::new(rows, cols, data).expect("gaussian samples are finite")
}

/// Weights drawn i.i.d. from `N(0, 1/dim)`, stored at f32.
pub fn generate_weights(spec: &SyntheticWeights) -> Result<WeightBundle> {
    if spec.dim == 0 {
        return invalid("embedding dimension must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.dim as f64).sqrt();
    let mut bundle = WeightBundle::new(spec.blocks.clone());
    for layer in &spec.layers {
        if layer.rows == 0 {
            return invalid(format!("layer {:?} has zero rows", layer.info.name));
        }
        let w = gaussian(&mut rng, layer.rows, spec.dim).scale(scale);
        bundle.push(layer.info.clone(), w.cast()?)?;
    }
    Ok(bundle)
}

/// Standard-normal concept columns, unit-normalized when requested. The erase,
/// guide and preserve matrices come from one stream in that order.
pub fn generate_concepts(spec: &SyntheticConcepts) -> Result<ConceptMatrices<f64>> {
    if spec.dim == 0 {
        return invalid("embedding dimension must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |cols| {
        let c = gaussian(&mut rng, spec.dim, cols);
        if spec.unit_normalize {
            normalize_columns(&c)
        } else {
            c
        }
    };
    let erase = draw(spec.n_erase);
    let guide = draw(spec.n_erase);
    let preserve = draw(spec.n_preserve);
    ConceptMatrices::new(erase, guide, preserve)
}

pub fn generate_synthetic_problem(
    weights: &SyntheticWeights,
    concepts: &SyntheticConcepts,
) -> Result<(WeightBundle, ConceptMatrices<f64>)> {
    if weights.dim != concepts.dim {
        return invalid(format!("weights have {} columns but concepts have dimension {}", weights.dim, concepts.dim));
    }
    Ok((generate_weights(weights)?, generate_concepts(concepts)?))
}

fn normalize_columns(c: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let norms: Vec<f64> = (0..c.cols()).map(|j| c.column(j).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    DenseMatrix::from_fn(c.rows(), c.cols(), |i, j| if norms[j] > 0.0 { c.get(i, j) / norms[j] } else { 0.0 })
        .expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bundle() {
        let spec = SyntheticWeights::uniform(4, 8, 6, 42);
        assert_eq!(generate_weights(&spec).unwrap(), generate_weights(&spec).unwrap());
        let other = SyntheticWeights { seed: 43, ..spec.clone() };
        assert_ne!(generate_weights(&spec).unwrap(), generate_weights(&other).unwrap());
        let c = SyntheticConcepts::new(1, 6, 2, 3);
        assert_eq!(generate_concepts(&c).unwrap(), generate_concepts(&c).unwrap());
    }

    #[test]
    fn unit_columns() {
        let c = generate_concepts(&SyntheticConcepts::new(9, 40, 3, 5)).unwrap();
        for m in [c.erase(), c.guide(), c.preserve()] {
            for j in 0..m.cols() {
                let n: f64 = m.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn concept_shapes() {
        let c = generate_concepts(&SyntheticConcepts::new(2, 10, 1, 2)).unwrap();
        assert_eq!(c.erase().shape(), (10, 1));
        assert_eq!(c.guide().shape(), (10, 1));
        assert_eq!(c.preserve().shape(), (10, 2));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(generate_concepts(&SyntheticConcepts::new(2, 0, 1, 2)).is_err());
        assert!(generate_weights(&SyntheticWeights::uniform(2, 0, 4, 1)).is_err());
        assert!(generate_weights(&SyntheticWeights::uniform(2, 3, 0, 1)).is_err());
        assert!(SyntheticWeights::sd_miniature(0, 1).is_err());
        let w = SyntheticWeights::uniform(1, 3, 4, 1);
        assert!(generate_synthetic_problem(&w, &SyntheticConcepts::new(1, 5, 1, 1)).is_err());
    }

    #[test]
    fn sd_miniature_layout() {
        let spec = SyntheticWeights::sd_miniature(5, 0).unwrap();
        assert_eq!(spec.layers.len(), 32);
        assert_eq!(spec.dim, 153);
        assert!(spec.layers.iter().all(|l| l.rows <= 256));
        assert_eq!(spec.layers.iter().filter(|l| l.info.block == "mid").count(), 2);
        let bundle = generate_weights(&spec).unwrap();
        assert_eq!(bundle.get("mid.0.attn2.to_v").unwrap().shape(), (256, 153));
    }
}
