//! Regression, mixture fit, local FDR and selection chained together.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mixture::{fit_mixture, EmConfig, EmTrace, FittedModel, MixtureStrategy};
use crate::regression::{self, CoefStats, Dataset, OutcomeModel};
use crate::screening::{compute_lfdr, step_up_select_with, LfdrScores, ScreeningResult, TieBreak};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Outcome regression; inferred from the outcome kind when absent.
    pub outcome_model: Option<OutcomeModel>,
    pub d1: usize,
    pub d2: usize,
    pub strategy: MixtureStrategy,
    pub em: EmConfig,
    pub alpha: f64,
    pub ties: TieBreak,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            outcome_model: None,
            d1: 1,
            d2: 1,
            strategy: MixtureStrategy::Auto,
            em: EmConfig::default(),
            alpha: 0.05,
            ties: TieBreak::Index,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Screened {
    pub model: FittedModel,
    pub trace: EmTrace,
    pub lfdr: LfdrScores,
    pub selection: ScreeningResult,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub stats: CoefStats,
    pub model: FittedModel,
    pub trace: EmTrace,
    pub lfdr: LfdrScores,
    pub selection: ScreeningResult,
}

/// Fit the prior to `stats`, score every hypothesis and select at `config.alpha`.
pub fn screen_stats(stats: &CoefStats, config: &PipelineConfig) -> Result<Screened> {
    let (model, trace) = fit_mixture(stats, config.d1, config.d2, config.strategy, &config.em)?;
    let lfdr = compute_lfdr(stats, &model)?;
    let selection = step_up_select_with(&lfdr, config.alpha, config.ties)?;
    Ok(Screened { model, trace, lfdr, selection })
}

/// The full pipeline on raw data.
pub fn run_pipeline(ds: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    let model = config.outcome_model.unwrap_or_else(|| OutcomeModel::for_kind(ds.outcome_kind()));
    let stats = regression::fit(ds, model)?;
    let Screened { model, trace, lfdr, selection } = screen_stats(&stats, config)?;
    Ok(PipelineOutput { stats, model, trace, lfdr, selection })
}
