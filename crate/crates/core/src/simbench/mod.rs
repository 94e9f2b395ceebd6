//! Simulation and evaluation harness comparing grouped and ungrouped models.
//!
//! A factor-model generator produces expression with blocks of strongly
//! (anti-)correlated genes. A blueprint coefficient vector is fit on genes
//! that have a highly correlated partner, jittered per replicate, and used
//! to draw phenotypes from a logistic model. Both arms are scored against
//! the known truth and compared with paired Wilcoxon signed-rank tests.

mod bench;
mod blueprint;
mod metrics;
mod synth;
mod wilcoxon;

pub use bench::{
    design_blueprint, read_results_csv, replicate_draw, run_benchmark, run_design_benchmark, write_results_csv,
    BenchConfig, BenchOutput, BenchSummary, Differences, MetricPValues, ReplicateDraw, GROUPED, UNGROUPED,
};
pub use blueprint::{
    jitter, make_blueprint, max_abs_correlations, simulate_phenotypes, BlueprintMode, BlueprintModel, Truth,
};
pub use metrics::{compute_metrics, Metrics, MetricsRecord};
pub use synth::{planted_phenotype, synth_expression, BlockSpec, NoiseModel, SyntheticDesign};
pub use wilcoxon::{exact_p_value, wilcoxon_signed_rank, WilcoxonResult};
