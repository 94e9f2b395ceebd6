//! Correlation-grouped elastic-net prediction for high-dimensional
//! expression data.
//!
//! Highly correlated genes (including anti-correlated ones) are collapsed
//! into signed-average representatives before an elastic-net logistic
//! regression is fit. Grouping runs in two stages: a sign-aware K-Means
//! splits the genes into manageable subsets ([`precluster`]), then
//! average-linkage clustering under `1 - correlation` builds one dendrogram
//! per subset ([`hcluster`]). The dendrogram cut is chosen by
//! cross-validated AUC ([`pipeline`]). [`simbench`] holds the simulation
//! harness comparing grouped and ungrouped models.

pub mod auc;
pub mod data;
pub mod enet;
pub mod error;
pub mod folds;
pub mod hcluster;
pub mod pipeline;
pub mod precluster;
pub mod seed;
pub mod simbench;
pub mod stats;

pub use auc::auc;
pub use data::{
    load_labels, load_matrix, load_predictions, standardize, write_labels, write_matrix, write_predictions,
    ExpressionMatrix, Orientation, StandardizedMatrix,
};
pub use enet::{CvLambda, CvOptions, EnetFit, PathOptions, SolverOptions};
pub use error::{Error, Result};
pub use hcluster::{Dendrogram, GroupingRule};
pub use pipeline::{GroupedModel, GroupingStructure, PipelineConfig, ThresholdReport};
pub use precluster::{GeneSet, PartitionSet, SignedClustering, SplitConfig};
pub use stats::pearson;
