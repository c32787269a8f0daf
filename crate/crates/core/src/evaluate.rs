//! Scoring selections against ground truth and Monte Carlo studies.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{amle_ratio, fit_mixture, EmConfig, JointMixture, MixtureStrategy};
use crate::regression::{self, CoefStats};
use crate::rng::{derive_seed, substream};
use crate::screening::{compute_lfdr, step_up_select, ScreeningResult};
use crate::simulate::{generate, sample_from_model, HypothesisClass, ScenarioKind, SimScenario};

/// Counts and rates of one selection against the true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// False discovery proportion `V / (R v 1)`.
    pub fdp: f64,
    pub power: f64,
    /// Rejected non-alternatives.
    pub v: usize,
    /// Rejections.
    pub r: usize,
    /// Alternatives left unrejected.
    pub p: usize,
    pub n_alternative: usize,
    /// Sum of the rejected scores.
    pub w_stat: f64,
    /// Realised `V / (R v 1)` at the selected threshold.
    pub q_tilde: f64,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioKind>,
}

/// Score `result` against labels of all hypotheses, including any the
/// regression step excluded (those count as not rejected).
pub fn score(result: &ScreeningResult, labels: &[HypothesisClass]) -> Result<EvalReport> {
    if result.rejected.len() != result.hypotheses.len() || result.hypotheses.len() > labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scored rows against {} labels",
            result.hypotheses.len(),
            labels.len()
        )));
    }
    if let Some(&h) = result.hypotheses.iter().find(|&&h| h >= labels.len()) {
        return Err(Error::DimensionMismatch(format!("hypothesis {h} has no label")));
    }
    let n_alternative = labels.iter().filter(|l| l.is_alternative()).count();
    let mut r = 0;
    let mut v = 0;
    for (&rej, &h) in result.rejected.iter().zip(&result.hypotheses) {
        if rej {
            r += 1;
            if !labels[h].is_alternative() {
                v += 1;
            }
        }
    }
    let fdp = v as f64 / r.max(1) as f64;
    let power = if n_alternative == 0 { 0.0 } else { (r - v) as f64 / n_alternative as f64 };
    Ok(EvalReport {
        fdp,
        power,
        v,
        r,
        p: n_alternative - (r - v),
        n_alternative,
        w_stat: result.rejected_score_sum,
        q_tilde: fdp,
        alpha: result.alpha,
        seed: None,
        scenario: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    /// Nominal levels; each replicate is fitted once and selected at every level.
    pub alphas: Vec<f64>,
    /// Alternative components per axis; taken from the scenario when absent.
    pub components: Option<(usize, usize)>,
    pub strategy: MixtureStrategy,
    /// EM settings; the seed is replaced by each replicate's seed.
    pub em: EmConfig,
    /// Also select with the generating prior.
    pub oracle: bool,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_fraction: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            alphas: vec![0.05],
            components: None,
            strategy: MixtureStrategy::Auto,
            em: EmConfig::default(),
            oracle: true,
            max_failure_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    /// One report per level, in the order of `StudyOptions::alphas`.
    pub adaptive: Vec<EvalReport>,
    pub oracle: Vec<EvalReport>,
    /// Estimated FDR (mean rejected score) per level.
    pub estimated_fdr: Vec<f64>,
    /// Fitted minus true log-likelihood.
    pub amle_ratio: f64,
    pub em_converged: bool,
    /// Hypotheses the regression step excluded.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub seed: u64,
    pub code: String,
    pub message: String,
}

/// Mean and Monte Carlo standard error over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Estimate { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        Estimate { mean, se: (var / k as f64).sqrt() }
    }

    /// `mean <= bound + width * se`.
    pub fn within(&self, bound: f64, width: f64) -> bool {
        self.mean <= bound + width * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub alpha: f64,
    pub fdr: Estimate,
    pub power: Estimate,
    pub oracle_fdr: Option<Estimate>,
    pub oracle_power: Option<Estimate>,
    pub estimated_fdr: Estimate,
    pub mean_rejections: f64,
    pub median_rejections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: SimScenario,
    pub reps: usize,
    pub levels: Vec<LevelSummary>,
    /// Fraction of completed replicates whose fit is at least as likely as the truth.
    pub amle_nonnegative: f64,
    pub replicates: Vec<ReplicateOutcome>,
    pub failures: Vec<ReplicateFailure>,
}

impl StudyReport {
    pub fn level(&self, alpha: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| l.alpha == alpha)
    }
}

/// Run `reps` independent replicates of `sc`. Replicate `r` uses
/// `derive_seed(sc.seed, r)` for both data and EM restarts.
pub fn replicate_study(sc: &SimScenario, reps: usize, options: &StudyOptions) -> Result<StudyReport> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if options.alphas.is_empty() || options.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidParameter("alphas must be non-empty and in (0, 1)".into()));
    }
    sc.validate()?;
    options.em.validate()?;

    let results: Vec<std::result::Result<ReplicateOutcome, ReplicateFailure>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(sc.seed, r as u64);
            run_replicate(sc, r, seed, options).map_err(|e| ReplicateFailure {
                index: r,
                seed,
                code: e.code().to_string(),
                message: e.to_string(),
            })
        })
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(o) => replicates.push(o),
            Err(f) => failures.push(f),
        }
    }
    let limit = (options.max_failure_fraction * reps as f64).floor() as usize;
    if failures.len() > limit || replicates.is_empty() {
        return Err(Error::TooManyFailures { failed: failures.len(), reps, limit });
    }

    let levels = options
        .alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let pick = |f: &dyn Fn(&ReplicateOutcome) -> f64| replicates.iter().map(f).collect::<Vec<f64>>();
            let mut rejections = pick(&|o| o.adaptive[j].r as f64);
            let mean_rejections = rejections.iter().sum::<f64>() / rejections.len() as f64;
            LevelSummary {
                alpha,
                fdr: Estimate::of(&pick(&|o| o.adaptive[j].fdp)),
                power: Estimate::of(&pick(&|o| o.adaptive[j].power)),
                oracle_fdr: options.oracle.then(|| Estimate::of(&pick(&|o| o.oracle[j].fdp))),
                oracle_power: options.oracle.then(|| Estimate::of(&pick(&|o| o.oracle[j].power))),
                estimated_fdr: Estimate::of(&pick(&|o| o.estimated_fdr[j])),
                mean_rejections,
                median_rejections: median(&mut rejections),
            }
        })
        .collect();
    let amle_nonnegative =
        replicates.iter().filter(|o| o.amle_ratio >= 0.0).count() as f64 / replicates.len() as f64;
    Ok(StudyReport { scenario: sc.clone(), reps, levels, amle_nonnegative, replicates, failures })
}

fn run_replicate(sc: &SimScenario, index: usize, seed: u64, options: &StudyOptions) -> Result<ReplicateOutcome> {
    let scenario = sc.with_seed(seed);
    let data = generate(&scenario)?;
    let stats = regression::fit(&data.data, sc.kind.outcome_model())?;
    let (d1, d2) = options.components.unwrap_or_else(|| sc.kind.components());
    let em = EmConfig { seed, ..options.em.clone() };
    let (model, trace) = fit_mixture(&stats, d1, d2, options.strategy, &em)?;
    let lfdr = compute_lfdr(&stats, &model)?;
    let oracle_lfdr = if options.oracle { Some(compute_lfdr(&stats, &data.truth)?) } else { None };

    let tag = |mut rep: EvalReport| {
        rep.seed = Some(seed);
        rep.scenario = Some(sc.kind);
        rep
    };
    let mut adaptive = Vec::new();
    let mut oracle = Vec::new();
    let mut estimated_fdr = Vec::new();
    for &alpha in &options.alphas {
        let sel = step_up_select(&lfdr, alpha)?;
        estimated_fdr.push(sel.estimated_fdr());
        adaptive.push(tag(score(&sel, &data.labels)?));
        if let Some(o) = &oracle_lfdr {
            oracle.push(tag(score(&step_up_select(o, alpha)?, &data.labels)?));
        }
    }
    Ok(ReplicateOutcome {
        index,
        seed,
        adaptive,
        oracle,
        estimated_fdr,
        amle_ratio: amle_ratio(&stats, &model, &data.truth)?,
        em_converged: trace.converged,
        excluded: stats.failures.len(),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Two independent Monte Carlo estimates of the expected null mass below `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WCheck {
    /// Mean of `W_m(delta) / m` with data drawn from the full mixture.
    pub lhs: f64,
    /// `sum pi_uv P(lfdr <= delta | state uv)` over null states, from draws of each null state.
    pub rhs: f64,
    pub lhs_se: f64,
    pub rhs_se: f64,
    /// `(lhs - rhs) / sqrt(lhs_se^2 + rhs_se^2)`; 0 when both errors vanish.
    pub z: f64,
}

/// Check that the mean rejected score below `delta` estimates the expected
/// number of null hypotheses below `delta`, per hypothesis. Each replicate
/// draws one set of `var1.len()` hypotheses for each side.
pub fn w_unbiasedness_check(
    model: &impl JointMixture,
    var1: &[f64],
    var2: &[f64],
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<WCheck> {
    let g = model.as_general();
    g.validate()?;
    if reps < 2 {
        return Err(Error::InvalidParameter("reps must be at least 2".into()));
    }
    if var1.len() != var2.len() || var1.is_empty() {
        return Err(Error::DimensionMismatch("var1 and var2 must be non-empty and equally long".into()));
    }
    let m = var1.len() as f64;
    let null_states: Vec<(usize, usize, f64)> = (0..=g.d1())
        .flat_map(|u| (0..=g.d2()).map(move |v| (u, v)))
        .filter(|&(u, v)| u == 0 || v == 0)
        .map(|(u, v)| (u, v, g.pi_joint[u][v]))
        .collect();

    let draws: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let (stats, _) = sample_from_model(&*g, var1, var2, 1, derive_seed(seed, 2 * r as u64))?;
            let scores = compute_lfdr(&stats, &*g)?.scores;
            let lhs = scores.iter().filter(|&&s| s <= delta).sum::<f64>() / m;

            let mut rng = substream(derive_seed(seed, 2 * r as u64 + 1), 0);
            let mut rhs = 0.0;
            for &(u, v, w) in &null_states {
                let mut a = Vec::with_capacity(var1.len());
                let mut b = Vec::with_capacity(var1.len());
                for (&s1, &s2) in var1.iter().zip(var2) {
                    let za: f64 = rng.sample(StandardNormal);
                    let zb: f64 = rng.sample(StandardNormal);
                    a.push(g.mus[u] + (s1 + g.kappas[u]).sqrt() * za);
                    b.push(g.thetas[v] + (s2 + g.psis[v]).sqrt() * zb);
                }
                let stats = CoefStats::new(a, b, var1.to_vec(), var2.to_vec(), 1)?;
                let below = compute_lfdr(&stats, &*g)?.scores.iter().filter(|&&s| s <= delta).count();
                rhs += w * below as f64 / m;
            }
            Ok((lhs, rhs))
        })
        .collect();
    let draws = draws.into_iter().collect::<Result<Vec<_>>>()?;
    let lhs = Estimate::of(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let rhs = Estimate::of(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    let se = (lhs.se.powi(2) + rhs.se.powi(2)).sqrt();
    let z = if se > 0.0 { (lhs.mean - rhs.mean) / se } else { 0.0 };
    Ok(WCheck { lhs: lhs.mean, rhs: rhs.mean, lhs_se: lhs.se, rhs_se: rhs.se, z })
}
