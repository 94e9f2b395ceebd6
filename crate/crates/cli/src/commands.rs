use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use log::info;
use serde::Serialize;

use corrgroup::hcluster::RuleGene;
use corrgroup::pipeline::{self, DEFAULT_GRID};
use corrgroup::simbench::{self, BenchConfig, BenchSummary, BlueprintMode, MetricsRecord, SyntheticDesign, Truth};
use corrgroup::{
    load_labels, load_matrix, load_predictions, write_labels, write_matrix, write_predictions, GroupedModel,
    GroupingStructure, Orientation, PipelineConfig, SplitConfig,
};

/// A problem with the user's input rather than with the computation.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Invalid>()
            || c.is::<serde_json::Error>()
            || c.downcast_ref::<corrgroup::Error>()
                .is_some_and(corrgroup::Error::is_validation)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Refit the elastic net on the filtered genes
    Refit,
    /// Fit on all genes, then zero the filtered ones
    PostHoc,
}

impl From<Mode> for BlueprintMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Refit => BlueprintMode::Refit,
            Mode::PostHoc => BlueprintMode::PostHoc,
        }
    }
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Expression matrix (CSV, or TSV by extension)
    #[arg(long)]
    input: PathBuf,
    /// The matrix has one column per gene instead of one row per gene
    #[arg(long)]
    genes_in_columns: bool,
    /// Dendrogram cut height on the 1 - correlation scale
    #[arg(long)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest subset left unsplit by the signed K-Means stage
    #[arg(long, default_value_t = 1000)]
    max_subset: usize,
    /// Output grouping rule (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Also write the K-Means subsets (JSON)
    #[arg(long)]
    partition_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    genes_in_columns: bool,
    /// Binary labels, `cell_id,label` CSV with header
    #[arg(long)]
    labels: PathBuf,
    /// Threshold grid: `default` or a comma-separated list
    #[arg(long, default_value = "default")]
    grid: String,
    /// Outer folds scoring each threshold
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Folds for the inner penalty selection
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    /// Elastic-net mixing parameter in (0, 1]
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    max_subset: usize,
    /// Output model (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model written by `fit`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    genes_in_columns: bool,
    /// Output probabilities, `cell_id,prob` CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Synthetic design (JSON)
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Jitter sd as a fraction of the blueprint coefficient sd
    #[arg(long, default_value_t = 0.1)]
    jitter_sd: f64,
    /// Blueprint gene filter on max |correlation| with any other gene
    #[arg(long, default_value_t = 0.9)]
    min_cor: f64,
    #[arg(long, value_enum, default_value_t = Mode::Refit)]
    blueprint_mode: Mode,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Replicate truth written by `simulate`
    #[arg(long)]
    truth: PathBuf,
    /// Directory of `NAME.json` models, each with `NAME.probs.csv` predictions
    #[arg(long)]
    fits: PathBuf,
    /// Output metrics CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0.1)]
    jitter_sd: f64,
    #[arg(long, default_value_t = 0.9)]
    min_cor: f64,
    #[arg(long, value_enum, default_value_t = Mode::Refit)]
    blueprint_mode: Mode,
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    max_subset: usize,
    /// Cut every replicate at this threshold instead of sweeping the grid
    #[arg(long)]
    force_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output per-replicate metrics CSV; a summary and the resolved config
    /// are written alongside
    #[arg(long)]
    out: PathBuf,
}

fn orientation(genes_in_columns: bool) -> Orientation {
    if genes_in_columns {
        Orientation::GenesInColumns
    } else {
        Orientation::GenesInRows
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        info!("no seed given, using {s}");
        s
    })
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if spec.trim() == "default" {
        return Ok(DEFAULT_GRID.to_vec());
    }
    let grid = spec
        .split(',')
        .map(|t| {
            let t = t.trim();
            match t.parse::<f64>() {
                Ok(c) if c.is_finite() && c >= 0.0 => Ok(c),
                _ => Err(invalid(format!("grid entry '{t}' is not a non-negative number"))),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if grid.is_empty() {
        return Err(invalid("grid is empty"));
    }
    Ok(grid)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--alpha {alpha} must lie in (0, 1]")))
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(invalid(format!("--{name} must be positive")));
    }
    Ok(())
}

fn pipeline_config(
    grid: &str,
    folds: usize,
    inner_folds: usize,
    alpha: f64,
    max_subset: usize,
    seed: u64,
) -> Result<PipelineConfig> {
    check_alpha(alpha)?;
    check_positive("folds", folds)?;
    check_positive("inner-folds", inner_folds)?;
    if max_subset < 2 {
        return Err(invalid("--max-subset must be at least 2"));
    }
    let mut cfg = PipelineConfig {
        grid: parse_grid(grid)?,
        folds,
        alpha,
        seed,
        ..PipelineConfig::default()
    };
    cfg.split.max_size = max_subset;
    cfg.cv.folds = inner_folds;
    Ok(cfg)
}

/// `dir/name.ext` → `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Creates the parent directory of an output file if needed.
fn prepare_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    prepare_output(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

#[derive(Serialize)]
struct GroupConfig<'a> {
    command: &'static str,
    input: &'a Path,
    orientation: Orientation,
    threshold: f64,
    seed: u64,
    split: SplitConfig,
}

#[derive(Serialize)]
struct Subset {
    subset: usize,
    genes: Vec<RuleGene>,
}

pub fn group(a: &GroupArgs) -> Result<()> {
    if !(a.threshold.is_finite() && a.threshold >= 0.0) {
        return Err(invalid("--threshold must be a non-negative number"));
    }
    if a.max_subset < 2 {
        return Err(invalid("--max-subset must be at least 2"));
    }
    let seed = resolve_seed(a.seed);
    let split = SplitConfig {
        max_size: a.max_subset,
        ..SplitConfig::default()
    };
    let x = load_matrix(&a.input, orientation(a.genes_in_columns))?;
    info!("loaded {} cells x {} genes", x.n_cells(), x.n_genes());
    let structure = GroupingStructure::seeded(&x, &split, seed)?;
    let rule = structure.rule_at(a.threshold)?;
    info!("{} genes in {} groups", rule.n_genes(), rule.n_groups());
    write_json(&a.out, &rule)?;
    if let Some(path) = &a.partition_out {
        let ids = x.gene_ids();
        let subsets: Vec<Subset> = structure
            .partition
            .subsets
            .iter()
            .enumerate()
            .map(|(k, s)| Subset {
                subset: k,
                genes: s
                    .genes
                    .iter()
                    .zip(&s.signs)
                    .map(|(&g, &sign)| RuleGene {
                        gene_id: ids[g].clone(),
                        sign,
                    })
                    .collect(),
            })
            .collect();
        write_json(path, &subsets)?;
    }
    write_json(
        &sibling(&a.out, "config.json"),
        &GroupConfig {
            command: "group",
            input: &a.input,
            orientation: orientation(a.genes_in_columns),
            threshold: a.threshold,
            seed,
            split,
        },
    )
}

#[derive(Serialize)]
struct FitConfig<'a> {
    command: &'static str,
    input: &'a Path,
    labels: &'a Path,
    orientation: Orientation,
    pipeline: &'a PipelineConfig,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let cfg = pipeline_config(&a.grid, a.folds, a.inner_folds, a.alpha, a.max_subset, seed)?;
    let x = load_matrix(&a.input, orientation(a.genes_in_columns))?;
    let y = load_labels(&a.labels, x.cell_ids())?;
    info!("loaded {} cells x {} genes", x.n_cells(), x.n_genes());
    let model = pipeline::fit_pipeline(&x, &y, &cfg)?;
    info!(
        "{} of {} groups selected",
        model.fit.support().len(),
        model.rule.n_groups()
    );
    let mut text = model.to_json()?;
    text.push('\n');
    prepare_output(&a.out)?;
    fs::write(&a.out, text).with_context(|| format!("cannot write {}", a.out.display()))?;
    write_json(
        &sibling(&a.out, "config.json"),
        &FitConfig {
            command: "fit",
            input: &a.input,
            labels: &a.labels,
            orientation: orientation(a.genes_in_columns),
            pipeline: &cfg,
        },
    )
}

#[derive(Serialize)]
struct PredictConfig<'a> {
    command: &'static str,
    model: &'a Path,
    input: &'a Path,
    orientation: Orientation,
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("cannot read {}", a.model.display()))?;
    let model = GroupedModel::from_json(&text).with_context(|| format!("invalid model in {}", a.model.display()))?;
    let x = load_matrix(&a.input, orientation(a.genes_in_columns))?;
    let q = model.predict(&x)?;
    prepare_output(&a.out)?;
    write_predictions(&a.out, x.cell_ids(), &q)?;
    info!("wrote {} predictions", q.len());
    write_json(
        &sibling(&a.out, "config.json"),
        &PredictConfig {
            command: "predict",
            model: &a.model,
            input: &a.input,
            orientation: orientation(a.genes_in_columns),
        },
    )
}

fn bench_config(
    reps: usize,
    jitter_sd: f64,
    min_cor: f64,
    mode: Mode,
    pipeline: PipelineConfig,
    force_threshold: Option<f64>,
    seed: u64,
) -> Result<BenchConfig> {
    check_positive("reps", reps)?;
    if !(jitter_sd.is_finite() && jitter_sd >= 0.0) {
        return Err(invalid("--jitter-sd must be a non-negative number"));
    }
    if !(0.0..=1.0).contains(&min_cor) {
        return Err(invalid("--min-cor must lie in [0, 1]"));
    }
    if let Some(c) = force_threshold {
        if !(c.is_finite() && c >= 0.0) {
            return Err(invalid("--force-threshold must be a non-negative number"));
        }
    }
    Ok(BenchConfig {
        reps,
        sd_fraction: jitter_sd,
        min_cor,
        blueprint_mode: mode.into(),
        pipeline,
        force_threshold,
        seed,
    })
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    command: &'static str,
    design: &'a SyntheticDesign,
    bench: &'a BenchConfig,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    check_alpha(a.alpha)?;
    let pipeline = PipelineConfig {
        alpha: a.alpha,
        ..PipelineConfig::default()
    };
    let cfg = bench_config(a.reps, a.jitter_sd, a.min_cor, a.blueprint_mode, pipeline, None, seed)?;
    let design: SyntheticDesign = read_json(&a.design)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;

    let (x, blueprint) = simbench::design_blueprint(&design, &cfg)?;
    write_matrix(a.out.join("expr.csv"), &x, Orientation::GenesInRows)?;
    write_json(&a.out.join("blueprint.json"), &blueprint)?;
    for r in 0..a.reps {
        let draw = simbench::replicate_draw(&x, &blueprint, cfg.sd_fraction, cfg.seed, r)?;
        let dir = a.out.join(format!("rep_{r:03}"));
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_labels(dir.join("labels.csv"), x.cell_ids(), &draw.y)?;
        write_json(
            &dir.join("truth.json"),
            &Truth {
                replicate: r,
                blueprint: draw.truth,
                cell_ids: x.cell_ids().to_vec(),
                q: draw.q,
            },
        )?;
    }
    info!("wrote {} replicates to {}", a.reps, a.out.display());
    write_json(
        &a.out.join("config.json"),
        &SimulateConfig {
            command: "simulate",
            design: &design,
            bench: &cfg,
        },
    )
}

#[derive(Serialize)]
struct EvaluateConfig<'a> {
    command: &'static str,
    truth: &'a Path,
    fits: &'a Path,
    models: Vec<String>,
}

/// Model files in `dir`, sorted by name; resolved-config files are skipped.
fn model_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if path.is_file() && name.ends_with(".json") && !name.ends_with(".config.json") {
            out.push((name.trim_end_matches(".json").to_string(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn evaluate_one(truth: &Truth, name: &str, model_path: &Path) -> Result<MetricsRecord> {
    let text = fs::read_to_string(model_path).with_context(|| format!("cannot read {}", model_path.display()))?;
    let model = GroupedModel::from_json(&text).with_context(|| format!("invalid model in {}", model_path.display()))?;

    let universe: BTreeSet<&str> = truth.blueprint.gene_ids.iter().map(String::as_str).collect();
    let foreign: Vec<&str> = model
        .rule
        .groups
        .iter()
        .flat_map(|g| g.genes.iter().map(|rg| rg.gene_id.as_str()))
        .filter(|g| !universe.contains(g))
        .collect();
    if !foreign.is_empty() {
        return Err(invalid(format!(
            "{name}: genes outside the truth's gene universe: {}",
            foreign.join(", ")
        )));
    }

    let probs_path = sibling(model_path, "probs.csv");
    let (ids, q) =
        load_predictions(&probs_path).with_context(|| format!("{name}: cannot load {}", probs_path.display()))?;
    let by_cell: HashMap<&str, f64> = ids.iter().map(String::as_str).zip(q).collect();
    if by_cell.len() != truth.cell_ids.len() {
        return Err(invalid(format!(
            "{name}: {} predictions for {} cells",
            by_cell.len(),
            truth.cell_ids.len()
        )));
    }
    let q_hat = truth
        .cell_ids
        .iter()
        .map(|c| {
            by_cell
                .get(c.as_str())
                .copied()
                .ok_or_else(|| invalid(format!("{name}: no prediction for cell '{c}'")))
        })
        .collect::<Result<Vec<f64>>>()?;

    let selected = model.expand_selection(&truth.blueprint.gene_ids);
    let m = simbench::compute_metrics(&truth.blueprint.beta, &selected, &truth.q, &q_hat)?;
    Ok(MetricsRecord::new(truth.replicate, name, &m))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth: Truth = read_json(&a.truth)?;
    if truth.q.len() != truth.cell_ids.len() {
        return Err(invalid("truth has mismatched cell and probability counts"));
    }
    let files = model_files(&a.fits)?;
    let records = files
        .iter()
        .map(|(name, path)| evaluate_one(&truth, name, path))
        .collect::<Result<Vec<_>>>()?;
    prepare_output(&a.out)?;
    simbench::write_results_csv(&a.out, &records)?;
    info!("scored {} fits", records.len());
    write_json(
        &sibling(&a.out, "config.json"),
        &EvaluateConfig {
            command: "evaluate",
            truth: &a.truth,
            fits: &a.fits,
            models: files.into_iter().map(|(n, _)| n).collect(),
        },
    )
}

#[derive(Serialize)]
struct BenchConfigJson<'a> {
    command: &'static str,
    design: &'a SyntheticDesign,
    bench: &'a BenchConfig,
}

#[derive(Serialize)]
struct BenchSummaryJson<'a> {
    blueprint_genes: usize,
    #[serde(flatten)]
    summary: &'a BenchSummary,
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let seed = resolve_seed(a.seed);
    let pipeline = pipeline_config(&a.grid, a.folds, a.inner_folds, a.alpha, a.max_subset, seed)?;
    let cfg = bench_config(
        a.reps,
        a.jitter_sd,
        a.min_cor,
        a.blueprint_mode,
        pipeline,
        a.force_threshold,
        seed,
    )?;
    let design: SyntheticDesign = read_json(&a.design)?;
    let (_, blueprint, out) = simbench::run_design_benchmark(&design, &cfg)?;
    prepare_output(&a.out)?;
    simbench::write_results_csv(&a.out, &out.records)?;
    let p = &out.summary.p_values;
    info!(
        "signed-rank p-values: mse {:?}, precision {:?}, recall {:?}, f1 {:?}",
        p.mse, p.precision, p.recall, p.f1
    );
    write_json(
        &sibling(&a.out, "summary.json"),
        &BenchSummaryJson {
            blueprint_genes: blueprint.support().len(),
            summary: &out.summary,
        },
    )?;
    write_json(
        &sibling(&a.out, "config.json"),
        &BenchConfigJson {
            command: "bench",
            design: &design,
            bench: &cfg,
        },
    )
}
