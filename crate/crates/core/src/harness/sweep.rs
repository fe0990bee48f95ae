//! λ × iteration-count grids over a whole bundle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SpaceError};
use crate::harness::run::{assemble_bundle, solve_layers, RunConfig};
use crate::objective::ConceptMatrices;
use crate::storage::{block_sparsity_report, WeightBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sparsity,
    DeploymentBytes,
    ZipBytes,
    WallTime,
    Objective,
}

impl Metric {
    pub const ALL: [Metric; 5] =
        [Metric::Sparsity, Metric::DeploymentBytes, Metric::ZipBytes, Metric::WallTime, Metric::Objective];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Sparsity => "sparsity",
            Metric::DeploymentBytes => "deployment_bytes",
            Metric::ZipBytes => "zip_bytes",
            Metric::WallTime => "wall_time_secs",
            Metric::Objective => "objective",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sparsity" => Ok(Metric::Sparsity),
            "deployment_bytes" | "deployment" => Ok(Metric::DeploymentBytes),
            "zip_bytes" | "zip" => Ok(Metric::ZipBytes),
            "wall_time" | "wall_time_secs" | "time" => Ok(Metric::WallTime),
            "objective" => Ok(Metric::Objective),
            other => invalid(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambda_grid: Vec<f64>,
    pub iteration_grid: Vec<usize>,
    pub metrics: Vec<Metric>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.iteration_grid.is_empty() {
            return invalid("sweep grids must be non-empty");
        }
        if !self.lambda_grid.windows(2).all(|w| w[0] < w[1]) {
            return invalid("lambda grid must be strictly increasing");
        }
        if !self.iteration_grid.windows(2).all(|w| w[0] < w[1]) {
            return invalid("iteration grid must be strictly increasing");
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return invalid(format!("lambda {l} must be non-negative"));
        }
        Ok(())
    }

    /// Requested metrics, deduplicated, in column order.
    fn columns(&self) -> Vec<Metric> {
        let mut m = if self.metrics.is_empty() { Metric::ALL.to_vec() } else { self.metrics.clone() };
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// One `(λ, K)` grid point. Metrics that were not requested are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deployment_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zip_bytes: Option<u64>,
    /// Sum of per-layer solve times up to `iterations`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
    /// Sum of per-layer `J(W^(K))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub metrics: Vec<Metric>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("lambda,iterations");
        for m in &self.metrics {
            h.push(',');
            h.push_str(m.column());
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.lambda, r.iterations);
            for m in &self.metrics {
                let cell = match m {
                    Metric::Sparsity => r.sparsity.map(|v| v.to_string()),
                    Metric::DeploymentBytes => r.deployment_bytes.map(|v| v.to_string()),
                    Metric::ZipBytes => r.zip_bytes.map(|v| v.to_string()),
                    Metric::WallTime => r.wall_time_secs.map(|v| v.to_string()),
                    Metric::Objective => r.objective.map(|v| v.to_string()),
                };
                out.push(',');
                out.push_str(&cell.unwrap_or_default());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the bundle once per λ to the largest K in the grid, reading the
/// smaller K values off the same trajectory. Rows are λ-major in grid order.
pub fn sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<SweepTable> {
    cfg.validate()?;
    let (bundle, concepts) = cfg.load_inputs()?;
    sweep_bundle(&bundle, &concepts, cfg, spec)
}

pub fn sweep_bundle(
    bundle: &WeightBundle,
    concepts: &ConceptMatrices<f64>,
    cfg: &RunConfig,
    spec: &SweepSpec,
) -> Result<SweepTable> {
    spec.validate()?;
    cfg.validate()?;
    let metrics = spec.columns();
    let wants = |m| metrics.contains(&m);
    let max_k = *spec.iteration_grid.last().unwrap();
    let mut rows = Vec::with_capacity(spec.lambda_grid.len() * spec.iteration_grid.len());

    for &lambda in &spec.lambda_grid {
        let mut params = cfg.params;
        params.lambda = lambda;
        params.iterations = max_k;
        // The trace is not reported here; sample it sparsely.
        params.trace_stride = max_k.max(1);
        let solutions = solve_layers(bundle, concepts, &params, &spec.iteration_grid, cfg.parallelism)?;

        for (idx, &k) in spec.iteration_grid.iter().enumerate() {
            let edited = assemble_bundle(&bundle.blocks, &solutions, idx)?;
            let mut row = SweepRow {
                lambda,
                iterations: k,
                sparsity: None,
                deployment_bytes: None,
                zip_bytes: None,
                wall_time_secs: None,
                objective: None,
            };
            if wants(Metric::DeploymentBytes) || wants(Metric::ZipBytes) || wants(Metric::Sparsity) {
                let report = block_sparsity_report(&edited)?;
                if wants(Metric::Sparsity) {
                    row.sparsity = Some(report.totals.sparsity.unwrap_or(0.0));
                }
                if wants(Metric::DeploymentBytes) {
                    row.deployment_bytes = Some(report.totals.deployment_bytes);
                }
                if wants(Metric::ZipBytes) {
                    row.zip_bytes = Some(report.totals.zip_bytes);
                }
            }
            if wants(Metric::WallTime) {
                row.wall_time_secs = Some(solutions.iter().map(|s| s.checkpoints[idx].elapsed.as_secs_f64()).sum());
            }
            if wants(Metric::Objective) {
                let mut total = 0.0;
                for s in &solutions {
                    let w = if s.passthrough { s.objective.original() } else { &s.checkpoints[idx].matrix };
                    total += s.objective.total_objective(w, lambda)?;
                }
                row.objective = Some(total);
            }
            rows.push(row);
        }
    }
    Ok(SweepTable { metrics, rows })
}
