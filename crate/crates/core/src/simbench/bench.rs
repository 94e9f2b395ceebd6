use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::folds;
use crate::pipeline::{self, GroupedModel, GroupingStructure, PipelineConfig};
use crate::seed;
use crate::stats::median;

use super::blueprint::{jitter, make_blueprint, simulate_phenotypes, BlueprintMode, BlueprintModel};
use super::metrics::{compute_metrics, MetricsRecord};
use super::synth::{planted_phenotype, synth_expression, SyntheticDesign};
use super::wilcoxon::wilcoxon_signed_rank;

const TAG_REPLICATE: u64 = 11;
const MAX_REDRAWS: u64 = 1000;

pub const GROUPED: &str = "grouped";
pub const UNGROUPED: &str = "ungrouped";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reps: usize,
    pub sd_fraction: f64,
    pub min_cor: f64,
    pub blueprint_mode: BlueprintMode,
    pub pipeline: PipelineConfig,
    /// Skip the threshold sweep and cut every replicate at this value.
    pub force_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reps: 100,
            sd_fraction: 0.1,
            min_cor: 0.9,
            blueprint_mode: BlueprintMode::Refit,
            pipeline: PipelineConfig::default(),
            force_threshold: None,
            seed: 0,
        }
    }
}

/// Grouped minus ungrouped, per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Differences {
    pub replicate: usize,
    pub mse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Two-sided signed-rank p-values; `None` when too few differences are nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPValues {
    pub mse: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub reps: usize,
    /// Phenotype redraws caused by degenerate labels.
    pub redraws: usize,
    pub p_values: MetricPValues,
    pub median_differences: MetricPValues,
    pub selected_thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    /// Two rows per replicate: grouped then ungrouped.
    pub records: Vec<MetricsRecord>,
    pub differences: Vec<Differences>,
    pub summary: BenchSummary,
}

struct Replicate {
    grouped: MetricsRecord,
    ungrouped: MetricsRecord,
    redraws: usize,
    threshold: f64,
}

fn evaluate_arm(
    model: &GroupedModel,
    x: &ExpressionMatrix,
    truth: &BlueprintModel,
    q: &[f64],
    replicate: usize,
    method: &str,
) -> Result<MetricsRecord> {
    let q_hat = model.predict(x)?;
    let selected = model.expand_selection(&truth.gene_ids);
    let m = compute_metrics(&truth.beta, &selected, q, &q_hat)?;
    Ok(MetricsRecord::new(replicate, method, &m))
}

/// One replicate's data-generating model and phenotype draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraw {
    pub truth: BlueprintModel,
    pub y: Vec<u8>,
    pub q: Vec<f64>,
    /// Draws discarded because a class had fewer than two cells.
    pub redraws: usize,
}

/// Jitters `blueprint` and simulates phenotypes for replicate `r`, redrawing
/// until both classes have at least two cells.
pub fn replicate_draw(
    x: &ExpressionMatrix,
    blueprint: &BlueprintModel,
    sd_fraction: f64,
    master_seed: u64,
    r: usize,
) -> Result<ReplicateDraw> {
    let truth = jitter(
        blueprint,
        sd_fraction,
        seed::derive_seed(master_seed, seed::TAG_JITTER, r as u64),
    )?;
    let mut redraws = 0;
    loop {
        let s = seed::derive_seed(master_seed, seed::TAG_PHENOTYPE, ((r as u64) << 16) + redraws);
        let (y, q) = simulate_phenotypes(x, &truth, s)?;
        if folds::minority_count(&y) >= 2 {
            if redraws > 0 {
                warn!("replicate {r}: redrew phenotype {redraws} time(s)");
            }
            return Ok(ReplicateDraw {
                truth,
                y,
                q,
                redraws: redraws as usize,
            });
        }
        redraws += 1;
        if redraws >= MAX_REDRAWS {
            return Err(Error::InvalidExperiment(format!(
                "replicate {r}: phenotype stayed degenerate after {MAX_REDRAWS} draws"
            )));
        }
    }
}

fn run_replicate(
    r: usize,
    x: &ExpressionMatrix,
    structure: &GroupingStructure,
    blueprint: &BlueprintModel,
    config: &BenchConfig,
) -> Result<Replicate> {
    let ReplicateDraw { truth, y, q, redraws } = replicate_draw(x, blueprint, config.sd_fraction, config.seed, r)?;

    let mut cfg = config.pipeline.clone();
    cfg.seed = seed::derive_seed(config.seed, TAG_REPLICATE, r as u64);
    let grouped = match config.force_threshold {
        Some(c) => pipeline::fit_final(structure, &y, c, &cfg)?,
        None => pipeline::fit_with_structure(structure, &y, &cfg)?,
    };
    let ungrouped = pipeline::fit_ungrouped(&structure.std, &y, &cfg)?;
    Ok(Replicate {
        grouped: evaluate_arm(&grouped, x, &truth, &q, r, GROUPED)?,
        ungrouped: evaluate_arm(&ungrouped, x, &truth, &q, r, UNGROUPED)?,
        redraws,
        threshold: grouped.rule.threshold,
    })
}

fn p_value(d: &[f64]) -> Option<f64> {
    match wilcoxon_signed_rank(d) {
        Ok(r) => Some(r.p_value),
        Err(e) => {
            warn!("signed-rank test skipped: {e}");
            None
        }
    }
}

/// Runs every replicate on a fixed expression matrix and blueprint.
///
/// Each replicate jitters the blueprint, simulates phenotypes, and fits the
/// grouped pipeline and the ungrouped elastic net with the same seeds. The
/// grouping structure depends only on `x` and is built once.
pub fn run_benchmark(x: &ExpressionMatrix, blueprint: &BlueprintModel, config: &BenchConfig) -> Result<BenchOutput> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let structure = GroupingStructure::seeded(x, &config.pipeline.split, config.seed)?;
    info!(
        "pre-grouped {} genes into {} subsets",
        structure.std.retained_genes().len(),
        structure.partition.subsets.len()
    );
    let reps: Vec<Replicate> = (0..config.reps)
        .into_par_iter()
        .map(|r| run_replicate(r, x, &structure, blueprint, config))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(2 * reps.len());
    let mut differences = Vec::with_capacity(reps.len());
    for rep in &reps {
        let (g, u) = (&rep.grouped, &rep.ungrouped);
        differences.push(Differences {
            replicate: g.replicate,
            mse: g.mse - u.mse,
            precision: g.precision - u.precision,
            recall: g.recall - u.recall,
            f1: g.f1 - u.f1,
        });
        records.push(g.clone());
        records.push(u.clone());
    }
    let column = |f: fn(&Differences) -> f64| -> Vec<f64> { differences.iter().map(f).collect() };
    let (mse, precision, recall, f1) = (
        column(|d| d.mse),
        column(|d| d.precision),
        column(|d| d.recall),
        column(|d| d.f1),
    );
    let summary = BenchSummary {
        reps: reps.len(),
        redraws: reps.iter().map(|r| r.redraws).sum(),
        p_values: MetricPValues {
            mse: p_value(&mse),
            precision: p_value(&precision),
            recall: p_value(&recall),
            f1: p_value(&f1),
        },
        median_differences: MetricPValues {
            mse: Some(median(&mse)),
            precision: Some(median(&precision)),
            recall: Some(median(&recall)),
            f1: Some(median(&f1)),
        },
        selected_thresholds: reps.iter().map(|r| r.threshold).collect(),
    };
    Ok(BenchOutput {
        records,
        differences,
        summary,
    })
}

/// Generates expression from `design` and learns a blueprint from its
/// planted phenotype.
pub fn design_blueprint(design: &SyntheticDesign, config: &BenchConfig) -> Result<(ExpressionMatrix, BlueprintModel)> {
    let x = synth_expression(design)?;
    let y0 = planted_phenotype(design, &x)?;
    let blueprint = make_blueprint(
        &x,
        &y0,
        config.min_cor,
        config.blueprint_mode,
        config.pipeline.alpha,
        &config.pipeline.cv,
        seed::derive_seed(config.seed, seed::TAG_BLUEPRINT, 0),
    )?;
    info!("blueprint has {} nonzero coefficients", blueprint.support().len());
    Ok((x, blueprint))
}

/// [`design_blueprint`] followed by [`run_benchmark`].
pub fn run_design_benchmark(
    design: &SyntheticDesign,
    config: &BenchConfig,
) -> Result<(ExpressionMatrix, BlueprintModel, BenchOutput)> {
    let (x, blueprint) = design_blueprint(design, config)?;
    let out = run_benchmark(&x, &blueprint, config)?;
    Ok((x, blueprint, out))
}

/// Writes `replicate,method,mse,precision,recall,f1` rows.
pub fn write_results_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(["replicate", "method", "mse", "precision", "recall", "f1"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbench::synth::{BlockSpec, NoiseModel};

    fn small_design() -> SyntheticDesign {
        SyntheticDesign {
            n_cells: 80,
            n_genes: 40,
            blocks: vec![
                BlockSpec {
                    size: 5,
                    rho: 0.95,
                    signs: vec![1, -1],
                },
                BlockSpec {
                    size: 5,
                    rho: 0.95,
                    signs: vec![],
                },
            ],
            noise: NoiseModel::default(),
            causal_blocks: vec![0],
            effect: 4.0,
            intercept: 0.0,
            seed: 21,
        }
    }

    fn quick_config() -> BenchConfig {
        let mut cfg = BenchConfig {
            reps: 2,
            seed: 5,
            ..BenchConfig::default()
        };
        cfg.pipeline.folds = 5;
        cfg.pipeline.cv.folds = 5;
        cfg.pipeline.cv.path_length = 20;
        cfg.pipeline.grid = vec![0.1, 0.05, 1e-3];
        cfg
    }

    #[test]
    fn single_replicate_is_deterministic() {
        let mut cfg = quick_config();
        cfg.reps = 1;
        cfg.sd_fraction = 0.0;
        let (_, _, a) = run_design_benchmark(&small_design(), &cfg).unwrap();
        let (_, _, b) = run_design_benchmark(&small_design(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2);
    }

    #[test]
    fn forced_singleton_cut_gives_zero_differences() {
        let mut cfg = quick_config();
        cfg.force_threshold = Some(0.0);
        let (_, _, out) = run_design_benchmark(&small_design(), &cfg).unwrap();
        for d in &out.differences {
            assert_eq!((d.mse, d.precision, d.recall, d.f1), (0.0, 0.0, 0.0, 0.0));
        }
        assert_eq!(out.summary.p_values.mse, Some(1.0));
    }

    #[test]
    fn results_csv_round_trip() {
        let (_, _, out) = run_design_benchmark(&small_design(), &quick_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results_csv(&path, &out.records).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back, out.records);
        let grouped_mse: Vec<f64> = back.iter().filter(|r| r.method == GROUPED).map(|r| r.mse).collect();
        let in_memory: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.method == GROUPED)
            .map(|r| r.mse)
            .collect();
        assert_eq!(median(&grouped_mse), median(&in_memory));
    }
}
