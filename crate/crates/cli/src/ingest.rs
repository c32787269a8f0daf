//! CSV ingestion: parse, drop incomplete rows, filter rare mediators, optional CLR.

use std::path::{Path, PathBuf};

use mlfdr::{Dataset, OutcomeKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Cells read as missing rather than rejected.
const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

/// A numeric CSV table. Missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    if !path.is_file() {
        return Err(CliError::config("config.path", format!("{} does not exist", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data("ingest.read", format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data("ingest.malformed", format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(CliError::data("ingest.missing_header", format!("{}: no header row", path.display())));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data("ingest.malformed", format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in record.iter().enumerate() {
            let v = if MISSING.contains(&cell) {
                f64::NAN
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(CliError::data(
                            "ingest.non_numeric",
                            format!("{}: line {}, column '{}': cannot read '{cell}' as a number", path.display(), r + 2, headers[j]),
                        ))
                    }
                }
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

/// How the outcome columns are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeChoice {
    /// Binary when every outcome value is 0 or 1.
    #[default]
    Auto,
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Mediators with a smaller fraction of nonzero samples are dropped.
    pub prevalence_threshold: f64,
    pub pseudo_count: f64,
    pub clr: bool,
    /// Subtract column means from the exposure, mediators, confounders and
    /// continuous outcomes, which amounts to fitting intercepts.
    pub center: bool,
    pub outcome: OutcomeChoice,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { prevalence_threshold: 0.10, pseudo_count: 0.5, clr: false, center: false, outcome: OutcomeChoice::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub exposure: PathBuf,
    pub mediators: PathBuf,
    pub outcomes: PathBuf,
    pub confounders: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub prevalence: f64,
}

/// What ingestion kept and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub inputs: InputPaths,
    pub options: IngestOptions,
    pub rows_read: usize,
    /// 1-based data rows removed because some file had a missing value there.
    pub rows_dropped: Vec<usize>,
    pub rows_kept: usize,
    pub mediators_kept: Vec<String>,
    pub mediators_dropped: Vec<DroppedColumn>,
    pub confounders: Vec<String>,
    pub outcome_kind: OutcomeKind,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Mediator name of each hypothesis.
    pub ids: Vec<String>,
    pub manifest: IngestManifest,
}

pub fn ingest(paths: &InputPaths, options: &IngestOptions) -> Result<Ingested> {
    if !(0.0..=1.0).contains(&options.prevalence_threshold) {
        return Err(CliError::config("config.invalid_parameter", "prevalence threshold must lie in [0, 1]"));
    }
    if options.clr && !(options.pseudo_count >= 0.0 && options.pseudo_count.is_finite()) {
        return Err(CliError::config("config.invalid_parameter", "pseudo-count must be non-negative"));
    }
    let exposure = read_table(&paths.exposure)?;
    let mediators = read_table(&paths.mediators)?;
    let outcomes = read_table(&paths.outcomes)?;
    let confounders = paths.confounders.as_deref().map(read_table).transpose()?;

    if exposure.headers.len() != 1 {
        return Err(CliError::data(
            "ingest.exposure_columns",
            format!("exposure file must have one column, found {}", exposure.headers.len()),
        ));
    }
    if mediators.headers.len() != outcomes.headers.len() {
        return Err(CliError::data(
            "ingest.column_mismatch",
            format!("{} mediator columns but {} outcome columns", mediators.headers.len(), outcomes.headers.len()),
        ));
    }
    let n = exposure.rows.len();
    let named = [("mediators", &mediators), ("outcomes", &outcomes)].into_iter().chain(confounders.as_ref().map(|z| ("confounders", z)));
    for (name, table) in named {
        if table.rows.len() != n {
            return Err(CliError::data(
                "ingest.row_mismatch",
                format!("exposure has {n} rows but {name} has {}", table.rows.len()),
            ));
        }
    }

    let complete = |r: usize| {
        let mut tables = vec![&exposure, &mediators, &outcomes];
        tables.extend(confounders.as_ref());
        tables.iter().all(|t| t.rows[r].iter().all(|v| !v.is_nan()))
    };
    let (keep, dropped): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| complete(r));
    let rows = keep.len();

    let mut kept_cols = Vec::new();
    let mut mediators_dropped = Vec::new();
    for (j, name) in mediators.headers.iter().enumerate() {
        let nonzero = keep.iter().filter(|&&r| mediators.rows[r][j] != 0.0).count();
        let prevalence = if rows == 0 { 0.0 } else { nonzero as f64 / rows as f64 };
        if prevalence < options.prevalence_threshold {
            mediators_dropped.push(DroppedColumn { name: name.clone(), prevalence });
        } else {
            kept_cols.push(j);
        }
    }
    if kept_cols.is_empty() {
        return Err(CliError::data("ingest.no_mediators", "every mediator column was filtered out"));
    }

    let x = DVector::from_iterator(rows, keep.iter().map(|&r| exposure.rows[r][0]));
    let mut med = DMatrix::from_fn(rows, kept_cols.len(), |i, j| mediators.rows[keep[i]][kept_cols[j]]);
    if options.clr {
        clr_rows(&mut med, options.pseudo_count)?;
    }
    let out = DMatrix::from_fn(rows, kept_cols.len(), |i, j| outcomes.rows[keep[i]][kept_cols[j]]);
    let z = confounders.as_ref().map(|t| DMatrix::from_fn(rows, t.headers.len(), |i, j| t.rows[keep[i]][j]));

    let binary = out.iter().all(|&v| v == 0.0 || v == 1.0);
    let outcome_kind = match options.outcome {
        OutcomeChoice::Auto if binary => OutcomeKind::Binary,
        OutcomeChoice::Auto | OutcomeChoice::Continuous => OutcomeKind::Continuous,
        OutcomeChoice::Binary if !binary => {
            return Err(CliError::data("ingest.non_binary_outcome", "binary outcome requested but values other than 0/1 found"))
        }
        OutcomeChoice::Binary => OutcomeKind::Binary,
    };

    let (mut x, mut med, mut out, mut z) = (x, med, out, z);
    if options.center {
        center_columns(&mut x);
        center_columns(&mut med);
        if outcome_kind == OutcomeKind::Continuous {
            center_columns(&mut out);
        }
        if let Some(z) = z.as_mut() {
            center_columns(z);
        }
    }
    let dataset = Dataset::new(x, med, out, z, outcome_kind)?;
    let ids: Vec<String> = kept_cols.iter().map(|&j| mediators.headers[j].clone()).collect();
    let manifest = IngestManifest {
        inputs: paths.clone(),
        options: options.clone(),
        rows_read: n,
        rows_dropped: dropped.iter().map(|r| r + 1).collect(),
        rows_kept: rows,
        mediators_kept: ids.clone(),
        mediators_dropped,
        confounders: confounders.map_or(Vec::new(), |t| t.headers),
        outcome_kind,
    };
    Ok(Ingested { dataset, ids, manifest })
}

fn center_columns<C: nalgebra::Dim, S: nalgebra::StorageMut<f64, nalgebra::Dyn, C>>(m: &mut nalgebra::Matrix<f64, nalgebra::Dyn, C, S>) {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// Centered log-ratio of each row after adding `pseudo_count`.
pub fn clr_rows(m: &mut DMatrix<f64>, pseudo_count: f64) -> Result<()> {
    for mut row in m.row_iter_mut() {
        if row.iter().any(|&v| v + pseudo_count <= 0.0) {
            return Err(CliError::data("ingest.clr_domain", "CLR needs every value plus the pseudo-count to be positive"));
        }
        row.iter_mut().for_each(|v| *v = (*v + pseudo_count).ln());
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    Ok(())
}
