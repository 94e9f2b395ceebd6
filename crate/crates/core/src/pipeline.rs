//! End-to-end grouped model: pre-group, build dendrograms, pick the cut by
//! cross-validated AUC, fit the final elastic net and predict new cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auc::auc;
use crate::data::{standardize, ExpressionMatrix, StandardizedMatrix};
use crate::enet::{self, CvOptions, EnetFit};
use crate::error::{Error, Result};
use crate::folds;
use crate::hcluster::{self, Dendrogram, GroupingRule};
use crate::precluster::{self, GeneSet, PartitionSet, SplitConfig};
use crate::seed;

/// Dendrogram cut thresholds tried by default, coarsest first.
pub const DEFAULT_GRID: [f64; 11] = [1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub split: SplitConfig,
    pub grid: Vec<f64>,
    /// Outer folds used to score each threshold.
    pub folds: usize,
    pub alpha: f64,
    /// Inner penalty selection.
    pub cv: CvOptions,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: SplitConfig::default(),
            grid: DEFAULT_GRID.to_vec(),
            folds: 10,
            alpha: 0.5,
            cv: CvOptions::default(),
            seed: 0,
        }
    }
}

/// The unsupervised part of the pipeline: standardization, pre-grouped
/// subsets and one dendrogram per subset. Depends only on the expression
/// matrix, so it can be shared across phenotypes.
#[derive(Debug, Clone)]
pub struct GroupingStructure {
    pub std: StandardizedMatrix,
    pub partition: PartitionSet,
    pub dendrograms: Vec<Dendrogram>,
}

impl GroupingStructure {
    pub fn build(x: &ExpressionMatrix, split: &SplitConfig, seed: u64) -> Result<Self> {
        let std = standardize(x);
        if !std.constant_genes().is_empty() {
            info!("excluding {} zero-variance genes", std.constant_genes().len());
        }
        let partition = precluster::iterative_split(&std, split, seed)?;
        let dendrograms = partition
            .subsets
            .par_iter()
            .map(|s| hcluster::build_dendrogram(s, &std))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            std,
            partition,
            dendrograms,
        })
    }

    /// [`GroupingStructure::build`] with the K-Means seed derived from a
    /// run's master seed.
    pub fn seeded(x: &ExpressionMatrix, split: &SplitConfig, master_seed: u64) -> Result<Self> {
        Self::build(x, split, seed::derive_seed(master_seed, seed::TAG_KMEANS, 0))
    }

    pub fn groups_at(&self, c: f64) -> Vec<GeneSet> {
        hcluster::cut_all(&self.dendrograms, c)
    }

    pub fn rule_at(&self, c: f64) -> Result<GroupingRule> {
        hcluster::make_rule(&self.partition, &self.dendrograms, c, &self.std)
    }

    /// Smallest merge height over all dendrograms.
    pub fn min_merge_height(&self) -> Option<f64> {
        self.dendrograms
            .iter()
            .filter_map(Dendrogram::min_height)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub grid: Vec<f64>,
    pub auc_per_threshold: Vec<f64>,
    pub best_c: f64,
    pub group_counts: Vec<usize>,
}

/// Out-of-fold probabilities for every cell: per fold, the penalty is chosen
/// by inner cross-validation on the training cells only.
pub fn cv_predictions(
    predictors: &[Vec<f64>],
    y: &[u8],
    assignment: &[usize],
    n_folds: usize,
    alpha: f64,
    cv: &CvOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = (0..n_folds)
        .into_par_iter()
        .map(|f| -> Result<_> {
            let (train, test) = folds::split(assignment, f);
            let pick = |rows: &[usize]| -> Vec<Vec<f64>> {
                predictors
                    .iter()
                    .map(|c| rows.iter().map(|&i| c[i]).collect())
                    .collect()
            };
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let inner_seed = seed::derive_seed(seed, seed::TAG_INNER_FOLDS, f as u64);
            let (fit, _) = enet::fit_cv(&pick(&train), &yt, alpha, inner_seed, cv)?;
            let q = enet::predict_prob(&fit, &pick(&test))?;
            Ok((test, q))
        })
        .collect::<Result<_>>()?;
    let mut pooled = vec![f64::NAN; y.len()];
    for (test, q) in per_fold {
        for (i, v) in test.into_iter().zip(q) {
            pooled[i] = v;
        }
    }
    Ok(pooled)
}

fn outer_assignment(y: &[u8], config: &PipelineConfig) -> Result<(Vec<usize>, usize)> {
    if y.len() < config.folds {
        return Err(Error::InsufficientData(format!(
            "{} cells cannot fill {} folds",
            y.len(),
            config.folds
        )));
    }
    let k = folds::effective_folds(y, config.folds)?;
    let mut rng = seed::derived_rng(config.seed, seed::TAG_OUTER_FOLDS, 0);
    Ok((folds::stratified_folds(y, k, &mut rng), k))
}

fn check_labels(structure: &GroupingStructure, y: &[u8]) -> Result<()> {
    if y.len() != structure.std.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: structure.std.n_cells(),
            actual: y.len(),
        });
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Scores every threshold in the grid by pooled out-of-fold AUC.
///
/// One stratified fold split is shared by all thresholds. Thresholds that
/// cut the dendrograms into identical groupings share one evaluation.
pub fn cv_threshold_sweep(structure: &GroupingStructure, y: &[u8], config: &PipelineConfig) -> Result<ThresholdReport> {
    check_labels(structure, y)?;
    if config.grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    if let Some(c) = config.grid.iter().find(|c| c.is_nan() || **c < 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {c} is negative")));
    }
    let (assignment, k) = outer_assignment(y, config)?;

    let groupings: Vec<Vec<GeneSet>> = config.grid.iter().map(|&c| structure.groups_at(c)).collect();
    let mut distinct: Vec<&Vec<GeneSet>> = Vec::new();
    let mut slot_of: Vec<usize> = Vec::with_capacity(groupings.len());
    for g in &groupings {
        match distinct.iter().position(|d| *d == g) {
            Some(i) => slot_of.push(i),
            None => {
                slot_of.push(distinct.len());
                distinct.push(g);
            }
        }
    }

    let aucs: Vec<f64> = distinct
        .par_iter()
        .map(|groups| -> Result<f64> {
            if groups.is_empty() {
                warn!("threshold yields no predictors; recording AUC 0.5");
                return Ok(0.5);
            }
            let reps = hcluster::representatives_standardized(groups, &structure.std);
            let q = cv_predictions(&reps, y, &assignment, k, config.alpha, &config.cv, config.seed)?;
            auc(y, &q)
        })
        .collect::<Result<_>>()?;

    let auc_per_threshold: Vec<f64> = slot_of.iter().map(|&s| aucs[s]).collect();
    let mut best = 0;
    for (i, &a) in auc_per_threshold.iter().enumerate() {
        let better =
            a > auc_per_threshold[best] || (a == auc_per_threshold[best] && config.grid[i] > config.grid[best]);
        if better {
            best = i;
        }
    }
    Ok(ThresholdReport {
        grid: config.grid.clone(),
        auc_per_threshold,
        best_c: config.grid[best],
        group_counts: groupings.iter().map(Vec::len).collect(),
    })
}

/// A fitted grouping rule plus elastic net over its representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedModel {
    pub rule: GroupingRule,
    pub fit: EnetFit,
    /// Absent for models fit without a threshold sweep.
    pub report: Option<ThresholdReport>,
    pub fold_seed: u64,
}

fn fit_rule(rule: GroupingRule, reps: &[Vec<f64>], y: &[u8], config: &PipelineConfig) -> Result<GroupedModel> {
    let final_seed = seed::derive_seed(config.seed, seed::TAG_INNER_FOLDS, u64::MAX);
    let (fit, _) = enet::fit_cv(reps, y, config.alpha, final_seed, &config.cv)?;
    Ok(GroupedModel {
        rule,
        fit,
        report: None,
        fold_seed: config.seed,
    })
}

/// Grouping at `best_c` over the full data, then an elastic net on all
/// cells with the penalty chosen by cross-validation.
pub fn fit_final(
    structure: &GroupingStructure,
    y: &[u8],
    best_c: f64,
    config: &PipelineConfig,
) -> Result<GroupedModel> {
    check_labels(structure, y)?;
    let groups = structure.groups_at(best_c);
    let reps = hcluster::representatives_standardized(&groups, &structure.std);
    let rule = GroupingRule::from_groups(best_c, &groups, &structure.std);
    fit_rule(rule, &reps, y, config)
}

/// The ungrouped baseline: every retained gene is its own predictor.
pub fn fit_ungrouped(std: &StandardizedMatrix, y: &[u8], config: &PipelineConfig) -> Result<GroupedModel> {
    let genes = std.retained_genes();
    let groups: Vec<GeneSet> = genes.into_iter().map(|j| GeneSet::positive(vec![j])).collect();
    let reps = hcluster::representatives_standardized(&groups, std);
    fit_rule(GroupingRule::identity(std), &reps, y, config)
}

/// Threshold sweep followed by the final fit.
pub fn fit_with_structure(structure: &GroupingStructure, y: &[u8], config: &PipelineConfig) -> Result<GroupedModel> {
    let report = cv_threshold_sweep(structure, y, config)?;
    info!(
        "selected threshold {} (AUC {:.4})",
        report.best_c,
        report
            .auc_per_threshold
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    );
    let mut model = fit_final(structure, y, report.best_c, config)?;
    model.report = Some(report);
    Ok(model)
}

/// Full pipeline from raw expression and labels.
pub fn fit_pipeline(x: &ExpressionMatrix, y: &[u8], config: &PipelineConfig) -> Result<GroupedModel> {
    let structure = GroupingStructure::seeded(x, &config.split, config.seed)?;
    fit_with_structure(&structure, y, config)
}

impl GroupedModel {
    /// In-sample or new-cell probabilities; `x` is standardized with the
    /// stored training parameters.
    pub fn predict(&self, x: &ExpressionMatrix) -> Result<Vec<f64>> {
        let reps = hcluster::representatives(&self.rule, x)?;
        enet::predict_prob(&self.fit, &reps)
    }

    /// Genes whose group representative has a nonzero coefficient.
    pub fn selected_genes(&self) -> BTreeSet<String> {
        self.rule
            .groups
            .iter()
            .zip(&self.fit.coefficients)
            .filter(|(_, &b)| b != 0.0)
            .flat_map(|(g, _)| g.genes.iter().map(|rg| rg.gene_id.clone()))
            .collect()
    }

    /// Selection flag per gene of `gene_ids`; genes outside the rule are unselected.
    pub fn expand_selection(&self, gene_ids: &[String]) -> Vec<bool> {
        let selected = self.selected_genes();
        gene_ids.iter().map(|g| selected.contains(g)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelJson>(text)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct FitJson {
    alpha: f64,
    lambda: f64,
    intercept: f64,
    /// Keyed by group id.
    coefficients: BTreeMap<String, f64>,
    converged: bool,
    objective: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    rule: GroupingRule,
    fit: FitJson,
    report: Option<ThresholdReport>,
    fold_seed: u64,
}

impl From<&GroupedModel> for ModelJson {
    fn from(m: &GroupedModel) -> Self {
        let coefficients = m
            .rule
            .groups
            .iter()
            .zip(&m.fit.coefficients)
            .map(|(g, &b)| (g.id.to_string(), b))
            .collect();
        ModelJson {
            rule: m.rule.clone(),
            fit: FitJson {
                alpha: m.fit.alpha,
                lambda: m.fit.lambda,
                intercept: m.fit.intercept,
                coefficients,
                converged: m.fit.converged,
                objective: m.fit.objective,
            },
            report: m.report.clone(),
            fold_seed: m.fold_seed,
        }
    }
}

impl TryFrom<ModelJson> for GroupedModel {
    type Error = Error;

    fn try_from(j: ModelJson) -> Result<Self> {
        let by_id: HashMap<String, f64> = j.fit.coefficients.into_iter().collect();
        let coefficients = j
            .rule
            .groups
            .iter()
            .map(|g| {
                by_id
                    .get(&g.id.to_string())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("no coefficient for group {}", g.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        if by_id.len() != coefficients.len() {
            return Err(Error::Validation("coefficients reference unknown groups".into()));
        }
        Ok(GroupedModel {
            rule: j.rule,
            fit: EnetFit {
                alpha: j.fit.alpha,
                lambda: j.fit.lambda,
                intercept: j.fit.intercept,
                coefficients,
                converged: j.fit.converged,
                objective: j.fit.objective,
                objective_trace: Vec::new(),
            },
            report: j.report,
            fold_seed: j.fold_seed,
        })
    }
}
