//! Dense closed-form edit versus the sparse iterative edit, layer by layer.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::run::{solve_layers, RunConfig};
use crate::objective::ConceptMatrices;
use crate::storage::report::LayerStorage;
use crate::storage::{LayerInfo, WeightBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    #[serde(flatten)]
    pub info: LayerInfo,
    /// `‖W_closed − W_iter(λ=0)‖_F / ‖W_closed‖_F`
    pub unpenalized_rel_delta: f64,
    pub closed_form_sparsity: f64,
    pub sparse_sparsity: f64,
    pub closed_form_deployment_bytes: u64,
    pub sparse_deployment_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTotals {
    pub max_unpenalized_rel_delta: f64,
    pub closed_form_deployment_bytes: u64,
    pub sparse_deployment_bytes: u64,
    pub closed_form_sparsity: f64,
    pub sparse_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lambda: f64,
    pub iterations: usize,
    pub layers: Vec<LayerComparison>,
    pub totals: ComparisonTotals,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn compare_uce_vs_space(cfg: &RunConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let (bundle, concepts) = cfg.load_inputs()?;
    compare_bundle(&bundle, &concepts, cfg)
}

/// For every layer: the closed-form solution, the iterative solution at λ=0
/// (which should match it), and the iterative solution at the configured λ.
pub fn compare_bundle(
    bundle: &WeightBundle,
    concepts: &ConceptMatrices<f64>,
    cfg: &RunConfig,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let k = cfg.params.iterations;
    let mut unpenalized = cfg.params;
    unpenalized.lambda = 0.0;
    unpenalized.trace_stride = k.max(1);
    let mut penalized = cfg.params;
    penalized.trace_stride = k.max(1);

    let dense_runs = solve_layers(bundle, concepts, &unpenalized, &[k], cfg.parallelism)?;
    let sparse_runs = solve_layers(bundle, concepts, &penalized, &[k], cfg.parallelism)?;

    let mut layers = Vec::with_capacity(bundle.len());
    let mut totals = ComparisonTotals {
        max_unpenalized_rel_delta: 0.0,
        closed_form_deployment_bytes: 0,
        sparse_deployment_bytes: 0,
        closed_form_sparsity: 0.0,
        sparse_sparsity: 0.0,
    };
    let (mut params, mut closed_zeros, mut sparse_zeros) = (0usize, 0usize, 0usize);

    for (d, s) in dense_runs.iter().zip(&sparse_runs) {
        let (closed, iter_dense, iter_sparse) = if d.passthrough {
            let w = d.objective.original().clone();
            (w.clone(), w.clone(), w)
        } else {
            (d.objective.closed_form_uce()?, d.checkpoints[0].matrix.clone(), s.checkpoints[0].matrix.clone())
        };
        let denom = closed.frobenius_norm();
        let diff = closed.sub(&iter_dense)?.frobenius_norm();
        let rel = if diff == 0.0 { 0.0 } else { diff / denom };

        let closed32 = closed.cast::<f32>()?;
        let sparse32 = iter_sparse.cast::<f32>()?;
        let info = &d.info;
        let closed_storage = LayerStorage::measure(&info.name, &info.block, info.kind, &closed32)?;
        let sparse_storage = LayerStorage::measure(&info.name, &info.block, info.kind, &sparse32)?;

        params += closed32.len();
        closed_zeros += closed32.zero_count();
        sparse_zeros += sparse32.zero_count();
        totals.max_unpenalized_rel_delta = totals.max_unpenalized_rel_delta.max(rel);
        totals.closed_form_deployment_bytes += closed_storage.deployment_bytes;
        totals.sparse_deployment_bytes += sparse_storage.deployment_bytes;
        layers.push(LayerComparison {
            info: info.clone(),
            unpenalized_rel_delta: rel,
            closed_form_sparsity: closed_storage.sparsity,
            sparse_sparsity: sparse_storage.sparsity,
            closed_form_deployment_bytes: closed_storage.deployment_bytes,
            sparse_deployment_bytes: sparse_storage.deployment_bytes,
        });
    }
    if params > 0 {
        totals.closed_form_sparsity = closed_zeros as f64 / params as f64;
        totals.sparse_sparsity = sparse_zeros as f64 / params as f64;
    }
    Ok(ComparisonReport { lambda: cfg.params.lambda, iterations: k, layers, totals })
}
