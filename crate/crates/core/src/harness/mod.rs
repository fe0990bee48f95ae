//! Experiment driver: synthetic problems, multi-layer runs, sweeps and
//! closed-form comparisons.

pub mod compare;
pub mod run;
pub mod sweep;
pub mod synthetic;

pub use compare::{compare_bundle, compare_uce_vs_space, ComparisonReport, LayerComparison};
pub use run::{
    analyze_bundle, encode_for_output, erase_bundle, read_concepts, run_erasure, write_concepts, ConceptSource,
    ErasureParams, LayerRun, OutputFormat, RunConfig, RunOutcome, RunReport, WeightSource,
};
pub use sweep::{sweep, sweep_bundle, Metric, SweepRow, SweepSpec, SweepTable};
pub use synthetic::{
    generate_concepts, generate_synthetic_problem, generate_weights, LayerSpec, SyntheticConcepts, SyntheticWeights,
};
