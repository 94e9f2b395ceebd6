//! Expression matrices: ingestion, export and z-scoring.
//!
//! Matrices are stored gene-major (each gene's expression across cells is a
//! contiguous slice) because every algorithm in this crate walks genes.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{self, CONSTANT_SD};

/// Layout of a delimited matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// One row per gene, one column per cell.
    #[default]
    GenesInRows,
    /// One row per cell, one column per gene.
    GenesInColumns,
}

/// Dense `n cells × p genes` expression matrix with identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    n_cells: usize,
    values: Vec<f64>,
    gene_ids: Vec<String>,
    cell_ids: Vec<String>,
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} identifier '{id}'")));
        }
    }
    Ok(())
}

impl ExpressionMatrix {
    /// Builds a matrix from one vector per gene.
    pub fn from_gene_columns(cell_ids: Vec<String>, gene_ids: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = cell_ids.len();
        if columns.len() != gene_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: gene_ids.len(),
                actual: columns.len(),
            });
        }
        let mut values = Vec::with_capacity(n * columns.len());
        for (col, id) in columns.iter().zip(&gene_ids) {
            if col.len() != n {
                return Err(Error::Validation(format!(
                    "gene '{id}' has {} values, expected {n}",
                    col.len()
                )));
            }
            values.extend_from_slice(col);
        }
        Self::from_flat(cell_ids, gene_ids, values)
    }

    fn from_flat(cell_ids: Vec<String>, gene_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = cell_ids.len();
        if n < 2 {
            return Err(Error::Validation(format!("need at least 2 cells, got {n}")));
        }
        if gene_ids.is_empty() {
            return Err(Error::Validation("need at least 1 gene".into()));
        }
        check_unique(&gene_ids, "gene")?;
        check_unique(&cell_ids, "cell")?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value for gene '{}' in cell '{}'",
                gene_ids[pos / n],
                cell_ids[pos % n]
            )));
        }
        Ok(Self {
            n_cells: n,
            values,
            gene_ids,
            cell_ids,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    /// Expression of gene `j` across all cells.
    pub fn gene(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_cells..(j + 1) * self.n_cells]
    }

    pub fn get(&self, cell: usize, gene: usize) -> f64 {
        self.values[gene * self.n_cells + cell]
    }

    pub fn gene_index(&self) -> HashMap<&str, usize> {
        self.gene_ids.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect()
    }

    /// Restricts the matrix to a subset of cells, in the given order.
    pub fn select_cells(&self, cells: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(cells.len() * self.n_genes());
        for j in 0..self.n_genes() {
            let g = self.gene(j);
            values.extend(cells.iter().map(|&c| g[c]));
        }
        let cell_ids = cells.iter().map(|&c| self.cell_ids[c].clone()).collect();
        Self::from_flat(cell_ids, self.gene_ids.clone(), values)
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => b'\t',
        _ => b',',
    }
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric value '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{field}'"),
        });
    }
    Ok(v)
}

/// Reads a CSV/TSV expression matrix (delimiter chosen from the extension).
///
/// The first row holds column identifiers after a corner cell; every other
/// row starts with its identifier. Output is always cells × genes.
pub fn load_matrix(path: impl AsRef<Path>, orientation: Orientation) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let col_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let width = header.len();

    let mut row_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        row_ids.push(rec[0].trim().to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|f| parse_value(f, line))
                .collect::<Result<_>>()?,
        );
    }

    match orientation {
        // rows are genes: already gene-major
        Orientation::GenesInRows => ExpressionMatrix::from_gene_columns(col_ids, row_ids, rows),
        Orientation::GenesInColumns => {
            let n = rows.len();
            let p = col_ids.len();
            let mut values = vec![0.0; n * p];
            for (c, row) in rows.iter().enumerate() {
                for (g, v) in row.iter().enumerate() {
                    values[g * n + c] = *v;
                }
            }
            ExpressionMatrix::from_flat(row_ids, col_ids, values)
        }
    }
}

/// Writes a matrix in the same format [`load_matrix`] reads. Values use the
/// shortest representation that parses back to the identical `f64`.
pub fn write_matrix(path: impl AsRef<Path>, x: &ExpressionMatrix, orientation: Orientation) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter_for(path))
        .from_writer(BufWriter::new(file));
    match orientation {
        Orientation::GenesInRows => {
            w.write_record(std::iter::once("gene").chain(x.cell_ids.iter().map(String::as_str)))?;
            for j in 0..x.n_genes() {
                let mut rec = vec![x.gene_ids[j].clone()];
                rec.extend(x.gene(j).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        Orientation::GenesInColumns => {
            w.write_record(std::iter::once("cell").chain(x.gene_ids.iter().map(String::as_str)))?;
            for c in 0..x.n_cells() {
                let mut rec = vec![x.cell_ids[c].clone()];
                rec.extend((0..x.n_genes()).map(|j| x.get(c, j).to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Per-gene z-scored expression. Constant genes keep an all-zero column and
/// are listed in `constant_genes`; downstream code never uses them.
#[derive(Debug, Clone)]
pub struct StandardizedMatrix {
    n_cells: usize,
    values: Vec<f64>,
    gene_means: Vec<f64>,
    gene_sds: Vec<f64>,
    constant_genes: Vec<usize>,
    gene_ids: Vec<String>,
}

impl StandardizedMatrix {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn gene(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_cells..(j + 1) * self.n_cells]
    }

    pub fn gene_means(&self) -> &[f64] {
        &self.gene_means
    }

    pub fn gene_sds(&self) -> &[f64] {
        &self.gene_sds
    }

    pub fn constant_genes(&self) -> &[usize] {
        &self.constant_genes
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.constant_genes.binary_search(&j).is_ok()
    }

    /// Indices of non-constant genes, ascending.
    pub fn retained_genes(&self) -> Vec<usize> {
        (0..self.n_genes()).filter(|&j| !self.is_constant(j)).collect()
    }
}

/// Z-scores every gene with the sample standard deviation (`n - 1`).
pub fn standardize(x: &ExpressionMatrix) -> StandardizedMatrix {
    let n = x.n_cells();
    let p = x.n_genes();
    let mut values = vec![0.0; n * p];
    let mut gene_means = Vec::with_capacity(p);
    let mut gene_sds = Vec::with_capacity(p);
    let mut constant_genes = Vec::new();
    for j in 0..p {
        let g = x.gene(j);
        let m = stats::mean(g);
        let sd = stats::sample_sd(g, m);
        gene_means.push(m);
        gene_sds.push(sd);
        if sd < CONSTANT_SD {
            constant_genes.push(j);
            continue;
        }
        for (out, v) in values[j * n..(j + 1) * n].iter_mut().zip(g) {
            *out = (v - m) / sd;
        }
    }
    StandardizedMatrix {
        n_cells: n,
        values,
        gene_means,
        gene_sds,
        constant_genes,
        gene_ids: x.gene_ids().to_vec(),
    }
}

/// Standardizes gene `j` of `x` with externally supplied (training) parameters.
pub fn standardize_with(values: &[f64], mean: f64, sd: f64) -> Vec<f64> {
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Reads binary labels from a two-column CSV (`cell_id,label`, with header)
/// and aligns them to `cell_ids`.
pub fn load_labels(path: impl AsRef<Path>, cell_ids: &[String]) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .from_reader(file);
    let mut by_cell = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let label = match rec[1].trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("label must be 0 or 1, found '{other}'"),
                })
            }
        };
        if by_cell.insert(rec[0].trim().to_string(), label).is_some() {
            return Err(Error::Validation(format!(
                "duplicate cell identifier '{}' in labels",
                rec[0].trim()
            )));
        }
    }
    let missing: Vec<String> = cell_ids
        .iter()
        .filter(|c| !by_cell.contains_key(c.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "labels missing for cells: {}",
            missing.join(", ")
        )));
    }
    Ok(cell_ids.iter().map(|c| by_cell[c.as_str()]).collect())
}

pub fn write_labels(path: impl AsRef<Path>, cell_ids: &[String], y: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["cell_id", "label"])?;
    for (c, l) in cell_ids.iter().zip(y) {
        w.write_record([c.as_str(), &l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `cell_id,prob` rows.
pub fn write_predictions(path: impl AsRef<Path>, cell_ids: &[String], q: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if cell_ids.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: cell_ids.len(),
            actual: q.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["cell_id", "prob"])?;
    for (c, p) in cell_ids.iter().zip(q) {
        w.write_record([c.as_str(), &p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `cell_id,prob` file written by [`write_predictions`].
pub fn load_predictions(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<f64>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let (mut ids, mut q) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let p: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("'{}' is not a probability", &rec[1]),
        })?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parse {
                line,
                message: format!("probability {p} outside [0, 1]"),
            });
        }
        ids.push(rec[0].to_string());
        q.push(p);
    }
    Ok((ids, q))
}
