//! `space`: sparse concept-erasure runs, sweeps, closed-form comparisons and
//! storage reports from the command line.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use space_core::harness::{
    analyze_bundle, compare_bundle, erase_bundle, generate_concepts, generate_weights, read_concepts, sweep_bundle,
    write_concepts, ConceptSource, Metric, OutputFormat, RunConfig, SweepSpec, SyntheticConcepts, SyntheticWeights,
    WeightSource,
};
use space_core::storage::{read_dense, write_dense, WeightBundle};
use space_core::{Algorithm, Concepts, Result, SpaceError};

#[derive(Debug, Parser)]
#[command(name = "space", version, about = "L1-sparse concept erasure for K/V projection matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Edit every K/V matrix of a bundle and write the result.
    Solve(SolveArgs),
    /// Run a λ × iteration grid and emit a CSV/JSON table.
    Sweep(SweepArgs),
    /// Closed-form dense edit versus the sparse edit, per layer.
    Compare(CompareArgs),
    /// Storage and sparsity report for an existing SPMX/SPCR file.
    Analyze(AnalyzeArgs),
    /// Write a synthetic weight bundle and concept set to disk.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// SPMX weight bundle.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Use a synthetic SD-style bundle instead of --input.
    #[arg(long)]
    synthetic: bool,
    /// Shrink factor for synthetic layer shapes (rows 320/640/1280, width 768).
    #[arg(long, default_value_t = 5, requires = "synthetic")]
    scale: usize,
    /// SPMX file with `erase`, `guide` and optional `preserve` matrices.
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Synthetic erase concepts (ignored with --concepts).
    #[arg(long, default_value_t = 1)]
    n_erase: usize,
    /// Synthetic preserve concepts (ignored with --concepts).
    #[arg(long, default_value_t = 2)]
    n_preserve: usize,
    /// Keep synthetic concept columns at their sampled length.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 1.0)]
    erase_scale: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// fista or ista.
    #[arg(long, default_value = "fista")]
    algo: Algorithm,
    /// Stop once the relative objective change stays below this.
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum number of layers solved concurrently.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Edited bundle.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// auto, dense or csr.
    #[arg(long, default_value = "auto")]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    lambda_grid: Vec<f64>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    iter_grid: Vec<usize>,
    /// Subset of sparsity,deployment_bytes,zip_bytes,wall_time,objective.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<Metric>,
    /// CSV table; printed to stdout when neither output is given.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// JSON comparison report; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    bundle: PathBuf,
    /// Per-layer CSV in addition to the JSON report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    scale: usize,
    #[arg(long, default_value_t = 1)]
    n_erase: usize,
    #[arg(long, default_value_t = 2)]
    n_preserve: usize,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight bundle (SPMX).
    #[arg(long)]
    out: PathBuf,
    /// Concept matrices (SPMX).
    #[arg(long)]
    concepts_out: PathBuf,
}

impl InputArgs {
    fn weight_source(&self) -> Result<WeightSource> {
        match &self.input {
            Some(p) => Ok(WeightSource::File(p.clone())),
            None => Ok(WeightSource::Synthetic(SyntheticWeights::sd_miniature(self.scale, self.seed)?)),
        }
    }

    fn synthetic_concepts(&self, dim: usize) -> SyntheticConcepts {
        let mut spec = SyntheticConcepts::new(self.seed.wrapping_add(1), dim, self.n_erase, self.n_preserve);
        spec.unit_normalize = !self.no_normalize;
        spec
    }

    /// Builds the run configuration and loads its inputs. Synthetic concepts
    /// take their width from the weight bundle.
    fn load(&self, params: &ParamArgs) -> Result<(RunConfig, WeightBundle, Concepts)> {
        let weights = self.weight_source()?;
        let bundle = match &weights {
            WeightSource::File(p) => read_dense(p)?,
            WeightSource::Synthetic(spec) => generate_weights(spec)?,
        };
        let (concept_source, concepts) = match &self.concepts {
            Some(p) => (ConceptSource::File(p.clone()), read_concepts(p)?),
            None => {
                let dim = bundle.layers.first().map_or(0, |l| l.matrix.cols());
                let spec = self.synthetic_concepts(dim);
                (ConceptSource::Synthetic(spec), generate_concepts(&spec)?)
            }
        };
        let mut cfg = RunConfig::new(weights, concept_source);
        cfg.params.lambda = params.lambda;
        cfg.params.lambda1 = params.lambda1;
        cfg.params.lambda2 = params.lambda2;
        cfg.params.erase_scale = params.erase_scale;
        cfg.params.iterations = params.iters;
        cfg.params.algorithm = params.algo;
        cfg.params.rel_objective_tol = params.tol;
        cfg.parallelism = params.parallelism;
        cfg.validate()?;
        Ok((cfg, bundle, concepts))
    }
}

fn print(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => print(text),
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let (mut cfg, bundle, concepts) = args.input.load(&args.params)?;
    cfg.output = args.out;
    cfg.report = args.report;
    cfg.output_format = args.format;
    let outcome = erase_bundle(&bundle, &concepts, &cfg)?;
    let totals = &outcome.report.storage.totals;
    eprintln!(
        "{} layers, sparsity {:.4}, deployment {} of {} dense bytes, {:.2}s",
        outcome.report.layers.len(),
        totals.sparsity.unwrap_or(0.0),
        totals.deployment_bytes,
        totals.dense_bytes,
        outcome.report.total_wall_time_secs,
    );
    if cfg.report.is_none() {
        print(&outcome.report.to_json()?)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (cfg, bundle, concepts) = args.input.load(&args.params)?;
    let spec = SweepSpec { lambda_grid: args.lambda_grid, iteration_grid: args.iter_grid, metrics: args.metrics };
    let table = sweep_bundle(&bundle, &concepts, &cfg, &spec)?;
    if let Some(p) = &args.json {
        std::fs::write(p, table.to_json()?)?;
    }
    if args.csv.is_some() || args.json.is_none() {
        write_or_print(args.csv.as_deref(), table.to_csv().trim_end())?;
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let (cfg, bundle, concepts) = args.input.load(&args.params)?;
    let report = compare_bundle(&bundle, &concepts, &cfg)?;
    write_or_print(args.report.as_deref(), &report.to_json()?)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let report = analyze_bundle(&args.bundle)?;
    if let Some(p) = &args.csv {
        std::fs::write(p, report.to_csv())?;
    }
    write_or_print(args.report.as_deref(), &report.to_json()?)
}

fn generate(args: GenerateArgs) -> Result<()> {
    let weights = SyntheticWeights::sd_miniature(args.scale, args.seed)?;
    let bundle = generate_weights(&weights)?;
    let mut spec = SyntheticConcepts::new(args.seed.wrapping_add(1), weights.dim, args.n_erase, args.n_preserve);
    spec.unit_normalize = !args.no_normalize;
    write_dense(&bundle, &args.out)?;
    write_concepts(&generate_concepts(&spec)?, &args.concepts_out)?;
    Ok(())
}

fn exit_code(err: &SpaceError) -> ExitCode {
    if err.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
