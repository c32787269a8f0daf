use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Parser, ValueEnum};
use serde::Serialize;

use crate::ingest::OutcomeChoice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Screen mediators in CSV input.
    Analyze,
    /// Draw one labelled dataset from a scenario and screen it.
    Simulate,
    /// Monte Carlo FDR and power over replicated scenario draws.
    Evaluate,
}

/// Screen mediators for non-zero indirect effects with local false discovery rates.
#[derive(Debug, Clone, Serialize, Parser)]
#[command(name = "mlfdr", version)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub mode: Mode,

    /// Single-column CSV with the exposure.
    #[arg(long)]
    pub exposure: Option<PathBuf>,

    /// CSV with one column per mediator.
    #[arg(long)]
    pub mediators: Option<PathBuf>,

    /// CSV with one outcome column per mediator, paired by position.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,

    #[arg(long)]
    pub confounders: Option<PathBuf>,

    /// Target FDR level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Levels reported in fdr_power.tsv, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.025, 0.05, 0.1, 0.15, 0.2])]
    pub alpha_grid: Vec<f64>,

    /// Root seed. Overrides the seed in a scenario file.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Non-null components for the exposure-mediator effect.
    #[arg(long, default_value_t = 1)]
    pub d1: usize,

    /// Non-null components for the mediator-outcome effect.
    #[arg(long, default_value_t = 1)]
    pub d2: usize,

    /// Fit marginals first, then only the joint weights.
    #[arg(long)]
    pub two_step: bool,

    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 3)]
    pub restarts: usize,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    /// Drop mediators that are nonzero in a smaller fraction of samples. 0 disables.
    #[arg(long, default_value_t = 0.10)]
    pub prevalence_filter: f64,

    /// Added before the CLR transform.
    #[arg(long, default_value_t = 0.5)]
    pub pseudo_count: f64,

    /// Centered log-ratio transform of each sample's mediators.
    #[arg(long)]
    pub clr: bool,

    /// Center every column before fitting, equivalent to adding intercepts.
    #[arg(long)]
    pub center: bool,

    #[arg(long, value_enum, default_value_t)]
    pub outcome_kind: OutcomeChoice,

    /// Add an exposure-mediator interaction to the outcome model.
    #[arg(long)]
    pub interaction: bool,

    /// Shuffle the exposure rows before fitting (a permutation null).
    #[arg(long)]
    pub permute_exposure: bool,

    /// TOML scenario for simulate and evaluate.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,

    #[arg(long, default_value_t = 100)]
    pub reps: usize,

    #[arg(long, default_value = "mlfdr-out")]
    pub out_dir: PathBuf,
}

/// Options the user did not set explicitly.
pub fn defaulted_options(matches: &ArgMatches) -> Vec<String> {
    matches
        .ids()
        .filter(|id| matches.value_source(id.as_str()) == Some(ValueSource::DefaultValue))
        .map(|id| id.as_str().to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{CommandFactory, FromArgMatches};

    #[test]
    fn defaults_are_reported() {
        let matches = Cli::command().get_matches_from(["mlfdr", "--mode", "evaluate", "--alpha", "0.1"]);
        let cli = Cli::from_arg_matches(&matches).unwrap();
        assert_eq!(cli.alpha, 0.1);
        let d = defaulted_options(&matches);
        assert!(d.contains(&"seed".to_string()) && d.contains(&"clr".to_string()));
        assert!(!d.contains(&"alpha".to_string()) && !d.contains(&"mode".to_string()));
    }

    #[test]
    fn command_is_well_formed() {
        Cli::command().debug_assert();
    }
}
