//! Screening mediators under the composite null `alpha_i * beta_i = 0`.
//!
//! Per-mediator regressions give standardized coefficient pairs `(a_i, b_i)`. A
//! Gaussian mixture prior over the four null/non-null patterns is fitted by EM,
//! each pair gets a local false discovery rate, and a step-up rule selects the
//! mediators. [`simulate`] and [`evaluate`] provide synthetic data with known
//! truth and the Monte Carlo harness used to check error control.

pub mod density;
pub mod error;
pub mod evaluate;
pub mod mixture;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod screening;
pub mod simulate;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use evaluate::{replicate_study, score, w_unbiasedness_check, EvalReport, StudyOptions, StudyReport};
pub use mixture::{
    em_fit, em_fit_two_step, fit_mixture, EmConfig, EmTrace, FittedModel, GeneralMixtureModel, JointMixture,
    MixtureModel, MixtureStrategy,
};
pub use pipeline::{run_pipeline, screen_stats, PipelineConfig, PipelineOutput};
pub use regression::{CoefStats, Dataset, Exposure, OutcomeKind, OutcomeModel};
pub use screening::{compute_lfdr, oracle_select, step_up_select, LfdrScores, ScreeningResult, TieBreak};
pub use simulate::{generate, HypothesisClass, LabeledDataset, ScenarioKind, SimScenario};
