//! Output tables and their readers.

use std::fs;
use std::path::Path;

use mlfdr::screening::{step_up_select, LfdrScores, ScreeningResult};
use mlfdr::{CoefStats, LabeledDataset};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{write_error, CliError, Result};

/// One row of `hypotheses.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub id: String,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// Variance of `sqrt(n) alpha_hat`.
    pub var1: f64,
    /// Variance of `sqrt(n) beta_hat`.
    pub var2: f64,
    pub lfdr: f64,
    pub rejected: bool,
}

pub fn hypothesis_rows(ids: &[String], stats: &CoefStats, scores: &LfdrScores, selection: &ScreeningResult) -> Vec<HypothesisRow> {
    (0..stats.len())
        .map(|row| HypothesisRow {
            id: ids[stats.hypotheses[row]].clone(),
            alpha_hat: stats.alpha_hat(row),
            beta_hat: stats.beta_hat(row),
            var1: stats.var1[row],
            var2: stats.var2[row],
            lfdr: scores.scores[row],
            rejected: selection.rejected[row],
        })
        .collect()
}

pub fn write_hypotheses(path: &Path, rows: &[HypothesisRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

pub fn read_hypotheses(path: &Path) -> Result<Vec<HypothesisRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::data("ingest.read", format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<HypothesisRow>, _>>()
        .map_err(|e| CliError::data("ingest.malformed", format!("{}: {e}", path.display())))
}

/// Rerun the step-up rule on the stored scores of a hypotheses table.
pub fn reselect(rows: &[HypothesisRow], alpha: f64) -> Result<ScreeningResult> {
    Ok(step_up_select(&LfdrScores::from_scores(rows.iter().map(|r| r.lfdr).collect()), alpha)?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_error(path, e))
}

fn write_matrix(path: &Path, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    w.write_record(headers).map_err(|e| write_error(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

/// Mediator names used for simulated data, matching the files written by [`write_dataset`].
pub fn simulated_ids(m: usize) -> Vec<String> {
    names("m", m)
}

/// Write a simulated dataset as the CSV files `analyze` reads, plus `labels.csv`.
pub fn write_dataset(dir: &Path, ds: &LabeledDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    let d = &ds.data;
    let x = DMatrix::from_iterator(d.n(), 1, d.exposure_for(0).iter().copied());
    write_matrix(&dir.join("exposure.csv"), &["x".to_string()], &x)?;
    write_matrix(&dir.join("mediators.csv"), &simulated_ids(d.m()), d.mediators())?;
    write_matrix(&dir.join("outcomes.csv"), &names("y", d.m()), d.outcomes())?;
    if let Some(z) = d.confounders() {
        write_matrix(&dir.join("confounders.csv"), &names("z", z.ncols()), z)?;
    }

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| write_error(&path, e))?;
    let mut header = vec!["id", "class", "alpha", "beta"];
    if ds.true_interaction.is_some() {
        header.push("interaction");
    }
    w.write_record(&header).map_err(|e| write_error(&path, e))?;
    let ids = simulated_ids(d.m());
    for i in 0..d.m() {
        let mut rec = vec![ids[i].clone(), ds.labels[i].as_str().to_string(), ds.true_alpha[i].to_string(), ds.true_beta[i].to_string()];
        if let Some(t) = &ds.true_interaction {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec).map_err(|e| write_error(&path, e))?;
    }
    w.flush().map_err(|e| write_error(&path, e))
}

/// One line of the plot-ready `fdr_power.tsv`. Standard errors are absent for a single dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub fdr: f64,
    pub fdr_se: Option<f64>,
    pub power: f64,
    pub power_se: Option<f64>,
    pub oracle_fdr: Option<f64>,
    pub oracle_power: Option<f64>,
    pub rejections: f64,
}

pub fn write_curve(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path).map_err(|e| write_error(path, e))?;
    for p in points {
        w.serialize(p).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}
