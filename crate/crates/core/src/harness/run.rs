//! Multi-layer erasure runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LayerFailure, Result, SpaceError};
use crate::harness::synthetic::{generate_concepts, generate_weights, SyntheticConcepts, SyntheticWeights};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::objective::{ConceptMatrices, ErasureObjective, LossWeights};
use crate::solver::{solve_with_checkpoints, Algorithm, Checkpoint, SolveTrace, SolverConfig};
use crate::storage::report::FileStorage;
use crate::storage::{
    block_sparsity_report, read_dense, read_stored, write_dense, write_stored, zip_compressed_size, Bundle, Layer,
    LayerInfo, StorageFormat, StorageReport, StoredMatrix, WeightBundle,
};

/// Entry names inside a concept bundle.
pub const ERASE_ENTRY: &str = "erase";
pub const GUIDE_ENTRY: &str = "guide";
pub const PRESERVE_ENTRY: &str = "preserve";
/// Block label used by concept bundles.
pub const CONCEPT_BLOCK: &str = "concepts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    File(PathBuf),
    Synthetic(SyntheticWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptSource {
    File(PathBuf),
    Synthetic(SyntheticConcepts),
}

/// How the edited bundle is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Each layer in whichever of dense/CSR is smaller.
    #[default]
    Auto,
    Dense,
    Csr,
}

impl std::str::FromStr for OutputFormat {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "dense" | "spmx" => Ok(Self::Dense),
            "csr" | "spcr" => Ok(Self::Csr),
            other => invalid(format!("unknown output format {other:?}")),
        }
    }
}

/// Parameters shared by every layer of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErasureParams {
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub erase_scale: f64,
    pub iterations: usize,
    pub algorithm: Algorithm,
    pub trace_stride: usize,
    pub rel_objective_tol: Option<f64>,
}

impl Default for ErasureParams {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lambda1: 1.0,
            lambda2: 1.0,
            erase_scale: 1.0,
            iterations: crate::solver::DEFAULT_ITERATIONS,
            algorithm: Algorithm::Fista,
            trace_stride: 10,
            rel_objective_tol: None,
        }
    }
}

impl ErasureParams {
    pub fn weights(&self) -> LossWeights<f64> {
        LossWeights { lambda1: self.lambda1, lambda2: self.lambda2, erase_scale: self.erase_scale }
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            algorithm: self.algorithm,
            iterations: self.iterations,
            lambda: self.lambda,
            rel_objective_tol: self.rel_objective_tol,
            trace_stride: self.trace_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub weights: WeightSource,
    pub concepts: ConceptSource,
    #[serde(flatten)]
    pub params: ErasureParams,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub output_format: OutputFormat,
    /// Maximum number of layers solved at once.
    pub parallelism: usize,
}

impl RunConfig {
    pub fn new(weights: WeightSource, concepts: ConceptSource) -> Self {
        Self {
            weights,
            concepts,
            params: ErasureParams::default(),
            output: None,
            report: None,
            output_format: OutputFormat::Auto,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return invalid("parallelism must be at least 1");
        }
        self.params.solver_config().validate()
    }

    /// Loads (or generates) the weight bundle and the concepts.
    pub fn load_inputs(&self) -> Result<(WeightBundle, ConceptMatrices<f64>)> {
        let bundle = match &self.weights {
            WeightSource::File(p) => read_dense(p)?,
            WeightSource::Synthetic(spec) => generate_weights(spec)?,
        };
        let concepts = match &self.concepts {
            ConceptSource::File(p) => read_concepts(p)?,
            ConceptSource::Synthetic(spec) => generate_concepts(spec)?,
        };
        Ok((bundle, concepts))
    }
}

/// Reads `erase`, `guide` and optional `preserve` matrices (one concept per
/// column) from an SPMX file.
pub fn read_concepts(path: impl AsRef<Path>) -> Result<ConceptMatrices<f64>> {
    let bundle = read_dense(path)?;
    let get = |name: &str| bundle.get(name).map(|m| m.cast::<f64>()).transpose();
    let erase = get(ERASE_ENTRY)?.ok_or_else(|| SpaceError::InvalidInput("concept file lacks \"erase\"".into()))?;
    let guide = get(GUIDE_ENTRY)?.ok_or_else(|| SpaceError::InvalidInput("concept file lacks \"guide\"".into()))?;
    let preserve = get(PRESERVE_ENTRY)?.unwrap_or_else(|| DenseMatrix::zeros(erase.rows(), 0));
    ConceptMatrices::new(erase, guide, preserve)
}

pub fn write_concepts(concepts: &ConceptMatrices<f64>, path: impl AsRef<Path>) -> Result<u64> {
    let mut bundle = WeightBundle::new(vec![CONCEPT_BLOCK.to_string()]);
    for (name, m) in
        [(ERASE_ENTRY, concepts.erase()), (GUIDE_ENTRY, concepts.guide()), (PRESERVE_ENTRY, concepts.preserve())]
    {
        bundle.push(LayerInfo::new(name, CONCEPT_BLOCK, None), m.cast()?)?;
    }
    write_dense(&bundle, path)
}

/// Summary of one layer's solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRun {
    #[serde(flatten)]
    pub info: LayerInfo,
    pub rows: usize,
    pub cols: usize,
    pub lipschitz: f64,
    pub lipschitz_fallback: bool,
    pub step_size: f64,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Exact-zero fraction of the stored f32 result.
    pub sparsity: f64,
    pub wall_time_secs: f64,
    /// `(k, J)` samples at the trace stride.
    pub objective_history: Vec<(usize, f64)>,
    pub sparsity_history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub params: ErasureParams,
    pub n_erase: usize,
    pub n_preserve: usize,
    pub layers: Vec<LayerRun>,
    pub storage: StorageReport,
    /// Wall time of all layer solves, end to end.
    pub total_wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub edited: WeightBundle,
}

/// Result of solving one layer, with iterates at the requested checkpoints.
pub(crate) struct LayerSolution {
    pub info: LayerInfo,
    pub objective: ErasureObjective<f64>,
    pub checkpoints: Vec<Checkpoint<f64>>,
    pub trace: SolveTrace<f64>,
    /// Layer left untouched because there is nothing to erase.
    pub passthrough: bool,
}

pub(crate) fn build_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| SpaceError::InvalidInput(format!("thread pool: {e}")))
}

/// Solves every layer independently, in parallel up to `parallelism`, and
/// returns the solutions in bundle order. Any failure aborts with the list of
/// failed layers.
pub(crate) fn solve_layers(
    bundle: &WeightBundle,
    concepts: &ConceptMatrices<f64>,
    params: &ErasureParams,
    checkpoints: &[usize],
    parallelism: usize,
) -> Result<Vec<LayerSolution>> {
    let cfg = params.solver_config();
    cfg.validate()?;
    let solve_one = |layer: &Layer<DenseMatrix<f32>>| -> Result<LayerSolution> {
        let original = layer.matrix.cast::<f64>()?;
        let objective = ErasureObjective::new(original, concepts.clone(), params.weights())?;
        if concepts.n_erase() == 0 {
            // Nothing to erase: the layer is returned as is.
            let w = objective.original().clone();
            let checkpoints = checkpoints
                .iter()
                .map(|&k| Checkpoint { iteration: k, matrix: w.clone(), elapsed: Default::default() })
                .collect();
            let lipschitz = objective.lipschitz_estimate();
            let trace = SolveTrace {
                objective_history: Vec::new(),
                sparsity_history: Vec::new(),
                lipschitz_used: lipschitz.value,
                lipschitz_fallback: lipschitz.fallback,
                step_size: 1.0 / lipschitz.value,
                iterations_run: 0,
                stopped_early: false,
                wall_time: Default::default(),
            };
            return Ok(LayerSolution { info: layer.info.clone(), objective, checkpoints, trace, passthrough: true });
        }
        let (checkpoints, trace) = solve_with_checkpoints(&objective, &cfg, checkpoints)?;
        Ok(LayerSolution { info: layer.info.clone(), objective, checkpoints, trace, passthrough: false })
    };

    let results: Vec<Result<LayerSolution>> = if parallelism <= 1 {
        bundle.layers.iter().map(solve_one).collect()
    } else {
        build_pool(parallelism)?.install(|| bundle.layers.par_iter().map(solve_one).collect())
    };

    let mut solutions = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (layer, r) in bundle.layers.iter().zip(results) {
        match r {
            Ok(s) => solutions.push(s),
            Err(error) => failures.push(LayerFailure { layer: layer.info.name.clone(), error }),
        }
    }
    if !failures.is_empty() {
        return Err(SpaceError::LayerFailures(failures));
    }
    Ok(solutions)
}

/// Bundle of f32 matrices assembled from the iterate at checkpoint `index`.
pub(crate) fn assemble_bundle(blocks: &[String], solutions: &[LayerSolution], index: usize) -> Result<WeightBundle> {
    let mut out = Bundle::new(blocks.to_vec());
    for s in solutions {
        let m = if s.passthrough { s.objective.original().cast()? } else { s.checkpoints[index].matrix.cast()? };
        out.push(s.info.clone(), m)?;
    }
    Ok(out)
}

/// Chooses each layer's on-disk encoding.
pub fn encode_for_output(bundle: &WeightBundle, format: OutputFormat) -> Result<Bundle<StoredMatrix>> {
    bundle.map(|_, m| {
        let chosen = match format {
            OutputFormat::Dense => StorageFormat::Dense,
            OutputFormat::Csr => StorageFormat::Csr,
            OutputFormat::Auto => crate::storage::deployment_format(m.rows() as u64, m.cols() as u64, m.nnz() as u64),
        };
        Ok(match chosen {
            StorageFormat::Dense => StoredMatrix::Dense(m.clone()),
            StorageFormat::Csr => StoredMatrix::Csr(CsrMatrix::from_dense(m)?),
        })
    })
}

/// Solves every K/V matrix with the shared λ and concept set, writes the
/// edited bundle and report when paths are configured, and returns both.
pub fn run_erasure(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let (bundle, concepts) = cfg.load_inputs()?;
    erase_bundle(&bundle, &concepts, cfg)
}

/// [`run_erasure`] on inputs already in memory.
pub fn erase_bundle(bundle: &WeightBundle, concepts: &ConceptMatrices<f64>, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let params = &cfg.params;
    let start = Instant::now();
    let solutions = solve_layers(bundle, concepts, params, &[params.iterations], cfg.parallelism)?;
    let total_wall_time_secs = start.elapsed().as_secs_f64();

    let edited = assemble_bundle(&bundle.blocks, &solutions, 0)?;
    let mut layers = Vec::with_capacity(solutions.len());
    for (s, stored) in solutions.iter().zip(&edited.layers) {
        let w = &s.checkpoints[0].matrix;
        layers.push(LayerRun {
            info: s.info.clone(),
            rows: w.rows(),
            cols: w.cols(),
            lipschitz: s.trace.lipschitz_used,
            lipschitz_fallback: s.trace.lipschitz_fallback,
            step_size: s.trace.step_size,
            iterations_run: s.trace.iterations_run,
            stopped_early: s.trace.stopped_early,
            initial_objective: s.objective.total_objective(s.objective.original(), params.lambda)?,
            final_objective: s.objective.total_objective(w, params.lambda)?,
            sparsity: stored.matrix.sparsity_fraction(),
            wall_time_secs: s.trace.wall_time.as_secs_f64(),
            objective_history: s.trace.objective_history.clone(),
            sparsity_history: s.trace.sparsity_history.clone(),
        });
    }

    let mut storage = block_sparsity_report(&edited)?;
    let mut output = None;
    if let Some(path) = &cfg.output {
        let stored = encode_for_output(&edited, cfg.output_format)?;
        let bytes = write_stored(&stored, path)?;
        storage.file =
            Some(FileStorage { path: path.display().to_string(), bytes, zip_bytes: zip_compressed_size(path)? });
        output = Some(path.display().to_string());
    }

    let report = RunReport {
        params: *params,
        n_erase: concepts.n_erase(),
        n_preserve: concepts.n_preserve(),
        layers,
        storage,
        total_wall_time_secs,
        output,
    };
    if let Some(path) = &cfg.report {
        std::fs::write(path, report.to_json()?)?;
    }
    Ok(RunOutcome { report, edited })
}

/// Storage report for an existing SPMX or SPCR file.
pub fn analyze_bundle(path: impl AsRef<Path>) -> Result<StorageReport> {
    let path = path.as_ref();
    let stored = read_stored(path)?;
    let dense = stored.to_dense()?;
    let mut report = block_sparsity_report(&dense)?;
    report.file = Some(FileStorage {
        path: path.display().to_string(),
        bytes: std::fs::metadata(path)?.len(),
        zip_bytes: zip_compressed_size(path)?,
    });
    Ok(report)
}
