//! Per-hypothesis coefficient estimation for the mediation model
//!
//! ```text
//! M_i = X alpha_i + Z eta_i + e_i
//! Y_i = M_i beta_i + X gamma_i + Z zeta_i + eps_i
//! ```
//!
//! Every hypothesis is fit independently. The reported statistics are on the
//! `sqrt(n)` scale: `a = sqrt(n) * alpha_hat`, `b = sqrt(n) * beta_hat`, with
//! `var1`, `var2` the corresponding sampling variances.

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual sums of squares at or below this fraction of `||y||^2` count as zero.
const DEGENERATE_RSS: f64 = 1e-20;
/// Relative size of a QR pivot below which a design column is treated as collinear.
const RANK_TOL: f64 = 1e-10;

const LOGISTIC_MAX_ITER: usize = 50;
const LOGISTIC_TOL: f64 = 1e-8;
const LOGISTIC_SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// Which outcome regression produces `b` and `var2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// OLS of `Y_i` on `(M_i, X, Z)`.
    Linear,
    /// Logistic regression of binary `Y_i` on `(M_i, X, Z)`.
    Logistic,
    /// OLS of `Y_i` on `(M_i, X, M_i X, Z)`.
    Interaction,
}

impl OutcomeModel {
    /// Default model for an outcome kind.
    pub fn for_kind(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Continuous => OutcomeModel::Linear,
            OutcomeKind::Binary => OutcomeModel::Logistic,
        }
    }
}

/// Exposure shared by all hypotheses, or one exposure column per hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum Exposure {
    Shared(DVector<f64>),
    PerHypothesis(DMatrix<f64>),
}

/// Raw inputs: exposure, paired mediator/outcome columns and optional confounders.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    exposure: Exposure,
    mediators: DMatrix<f64>,
    outcomes: DMatrix<f64>,
    confounders: Option<DMatrix<f64>>,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    pub fn new(
        x: DVector<f64>,
        mediators: DMatrix<f64>,
        outcomes: DMatrix<f64>,
        confounders: Option<DMatrix<f64>>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        Self::with_exposure(Exposure::Shared(x), mediators, outcomes, confounders, outcome_kind)
    }

    pub fn with_exposure(
        exposure: Exposure,
        mediators: DMatrix<f64>,
        outcomes: DMatrix<f64>,
        confounders: Option<DMatrix<f64>>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let n = mediators.nrows();
        let m = mediators.ncols();
        if outcomes.shape() != (n, m) {
            return Err(Error::DimensionMismatch(format!(
                "mediators are {}x{} but outcomes are {}x{}",
                n,
                m,
                outcomes.nrows(),
                outcomes.ncols()
            )));
        }
        match &exposure {
            Exposure::Shared(x) if x.len() != n => {
                return Err(Error::DimensionMismatch(format!(
                    "exposure has {} rows, mediators have {}",
                    x.len(),
                    n
                )))
            }
            Exposure::PerHypothesis(x) if x.shape() != (n, m) => {
                return Err(Error::DimensionMismatch(format!(
                    "per-hypothesis exposure is {}x{}, expected {}x{}",
                    x.nrows(),
                    x.ncols(),
                    n,
                    m
                )))
            }
            _ => {}
        }
        // An n x 0 confounder block is the same as no confounders.
        let confounders = confounders.filter(|z| z.ncols() > 0);
        let q = confounders.as_ref().map_or(0, |z| z.ncols());
        if let Some(z) = &confounders {
            if z.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "confounders have {} rows, mediators have {}",
                    z.nrows(),
                    n
                )));
            }
        }
        if n < 3 || n <= q + 2 {
            return Err(Error::TooFewSamples { n, required: (q + 2).max(2) });
        }
        if m == 0 {
            return Err(Error::InvalidDataset("no mediator/outcome pairs".into()));
        }

        let finite = |mat: &DMatrix<f64>| mat.iter().all(|v| v.is_finite());
        let exposure_finite = match &exposure {
            Exposure::Shared(x) => x.iter().all(|v| v.is_finite()),
            Exposure::PerHypothesis(x) => finite(x),
        };
        if !exposure_finite
            || !finite(&mediators)
            || !finite(&outcomes)
            || !confounders.as_ref().map_or(true, finite)
        {
            return Err(Error::InvalidDataset("non-finite entries".into()));
        }
        if outcome_kind == OutcomeKind::Binary && outcomes.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidDataset("binary outcomes must be 0 or 1".into()));
        }
        let zero_exposure = match &exposure {
            Exposure::Shared(x) => x.norm_squared() == 0.0,
            Exposure::PerHypothesis(x) => x.column_iter().any(|c| c.norm_squared() == 0.0),
        };
        if zero_exposure {
            return Err(Error::InvalidDataset("exposure has zero second moment".into()));
        }

        Ok(Dataset { exposure, mediators, outcomes, confounders, outcome_kind })
    }

    pub fn n(&self) -> usize {
        self.mediators.nrows()
    }

    pub fn m(&self) -> usize {
        self.mediators.ncols()
    }

    pub fn q(&self) -> usize {
        self.confounders.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn exposure(&self) -> &Exposure {
        &self.exposure
    }

    /// Exposure column used for hypothesis `i`.
    pub fn exposure_for(&self, i: usize) -> DVectorView<'_, f64> {
        match &self.exposure {
            Exposure::Shared(x) => x.column(0),
            Exposure::PerHypothesis(x) => x.column(i),
        }
    }

    pub fn mediators(&self) -> &DMatrix<f64> {
        &self.mediators
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    pub fn confounders(&self) -> Option<&DMatrix<f64>> {
        self.confounders.as_ref()
    }

    /// Copy of the dataset with the exposure rows reordered by `perm`.
    pub fn with_permuted_exposure(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch("permutation length differs from n".into()));
        }
        let exposure = match &self.exposure {
            Exposure::Shared(x) => Exposure::Shared(DVector::from_fn(n, |r, _| x[perm[r]])),
            Exposure::PerHypothesis(x) => {
                Exposure::PerHypothesis(DMatrix::from_fn(n, x.ncols(), |r, c| x[(perm[r], c)]))
            }
        };
        Ok(Dataset { exposure, ..self.clone() })
    }
}

/// Which of the two regressions a failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Mediator,
    Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FailureReason {
    RankDeficient { equation: Equation },
    DegenerateVariance { equation: Equation },
    SingleClassOutcome,
    Separation,
    NonConvergence,
}

/// A hypothesis that could not be fit and is excluded downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFailure {
    pub hypothesis: usize,
    pub reason: FailureReason,
}

/// Sufficient statistics `(a_i, b_i, var1_i, var2_i)` of the usable hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefStats {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub var1: Vec<f64>,
    pub var2: Vec<f64>,
    /// Sample size behind the estimates.
    pub n: usize,
    /// Original hypothesis index of each row.
    pub hypotheses: Vec<usize>,
    /// Hypotheses excluded from the rows above.
    pub failures: Vec<FitFailure>,
}

impl CoefStats {
    /// Statistics for hypotheses `0..m` with no failures.
    pub fn new(a: Vec<f64>, b: Vec<f64>, var1: Vec<f64>, var2: Vec<f64>, n: usize) -> Result<Self> {
        let m = a.len();
        if b.len() != m || var1.len() != m || var2.len() != m {
            return Err(Error::DimensionMismatch("a, b, var1, var2 lengths differ".into()));
        }
        if var1.iter().chain(&var2).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("variances must be positive and finite".into()));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("statistics must be finite".into()));
        }
        Ok(CoefStats { a, b, var1, var2, n, hypotheses: (0..m).collect(), failures: Vec::new() })
    }

    /// Number of usable hypotheses.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Total hypotheses including excluded ones.
    pub fn total_hypotheses(&self) -> usize {
        self.hypotheses.iter().chain(self.failures.iter().map(|f| &f.hypothesis)).map(|&h| h + 1).max().unwrap_or(0)
    }

    pub fn alpha_hat(&self, row: usize) -> f64 {
        self.a[row] / (self.n as f64).sqrt()
    }

    pub fn beta_hat(&self, row: usize) -> f64 {
        self.b[row] / (self.n as f64).sqrt()
    }

    /// Rows reordered by `perm` (row `r` of the result is row `perm[r]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        CoefStats {
            a: pick(&self.a),
            b: pick(&self.b),
            var1: pick(&self.var1),
            var2: pick(&self.var2),
            n: self.n,
            hypotheses: perm.iter().map(|&p| self.hypotheses[p]).collect(),
            failures: self.failures.clone(),
        }
    }
}

/// Per-hypothesis estimates before scaling by `sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisEstimate {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub var1: f64,
    pub var2: f64,
}

/// Ordinary least squares solution with the pieces needed for inference.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// Diagonal of `(D'D)^{-1}`.
    pub inv_gram_diag: DVector<f64>,
    pub df: usize,
}

impl LeastSquares {
    /// Unbiased residual variance `RSS / (n - p)`.
    pub fn sigma2(&self) -> f64 {
        self.rss / self.df as f64
    }
}

/// Least squares via Householder QR. Fails with `None` on a rank-deficient design.
pub fn least_squares(design: &DMatrix<f64>, y: DVectorView<'_, f64>) -> Option<LeastSquares> {
    let (n, p) = design.shape();
    if n <= p || !full_column_rank(design) {
        return None;
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let mut qty = y.clone_owned();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).clone_owned();
    let coef = r.solve_upper_triangular(&rhs)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p))?;
    let inv_gram_diag = DVector::from_iterator(p, r_inv.row_iter().map(|row| row.norm_squared()));
    let residuals = y - design * &coef;
    let rss = residuals.norm_squared();
    Some(LeastSquares { coef, residuals, rss, inv_gram_diag, df: n - p })
}

fn full_column_rank(design: &DMatrix<f64>) -> bool {
    let p = design.ncols();
    if design.nrows() < p {
        return false;
    }
    let scale = design.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return false;
    }
    let r = design.clone().qr().r();
    (0..p).all(|j| {
        let col = design.column(j).norm();
        col > 0.0 && r[(j, j)].abs() > RANK_TOL * col.max(RANK_TOL * scale)
    })
}

/// Logistic regression fit by Newton-Raphson.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    /// Inverse observed Fisher information at the solution.
    pub inv_information: DMatrix<f64>,
    pub iterations: usize,
}

/// Maximum-likelihood logistic regression of `y` (0/1) on `design` (no implicit intercept).
pub fn logistic_regression(
    design: &DMatrix<f64>,
    y: DVectorView<'_, f64>,
) -> std::result::Result<LogisticFit, FailureReason> {
    let (n, p) = design.shape();
    if n <= p || !full_column_rank(design) {
        return Err(FailureReason::RankDeficient { equation: Equation::Outcome });
    }
    let mut coef = DVector::<f64>::zeros(p);
    for iter in 1..=LOGISTIC_MAX_ITER {
        let (grad, info) = score_and_information(design, y, &coef);
        let chol = info
            .cholesky()
            .ok_or(FailureReason::RankDeficient { equation: Equation::Outcome })?;
        let step = chol.solve(&grad);
        coef += &step;
        if coef.iter().any(|c| !c.is_finite() || c.abs() > LOGISTIC_SEPARATION_BOUND) {
            return Err(FailureReason::Separation);
        }
        if step.amax() < LOGISTIC_TOL {
            let (_, info) = score_and_information(design, y, &coef);
            let inv_information = info
                .cholesky()
                .ok_or(FailureReason::RankDeficient { equation: Equation::Outcome })?
                .inverse();
            return Ok(LogisticFit { coef, inv_information, iterations: iter });
        }
    }
    Err(FailureReason::NonConvergence)
}

fn score_and_information(
    design: &DMatrix<f64>,
    y: DVectorView<'_, f64>,
    coef: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let eta = design * coef;
    let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
    let resid = y - &p;
    let grad = design.tr_mul(&resid);
    let mut weighted = design.clone();
    for (mut row, &pi) in weighted.row_iter_mut().zip(p.iter()) {
        row *= pi * (1.0 - pi);
    }
    let info = design.tr_mul(&weighted);
    (grad, info)
}

fn mediator_design(ds: &Dataset, i: usize) -> DMatrix<f64> {
    let n = ds.n();
    let q = ds.q();
    let x = ds.exposure_for(i);
    let mut d = DMatrix::zeros(n, 1 + q);
    d.set_column(0, &x);
    if let Some(z) = ds.confounders() {
        d.columns_mut(1, q).copy_from(z);
    }
    d
}

fn outcome_design(ds: &Dataset, i: usize, model: OutcomeModel) -> DMatrix<f64> {
    let n = ds.n();
    let q = ds.q();
    let x = ds.exposure_for(i);
    let mi = ds.mediators().column(i);
    let extra = usize::from(model == OutcomeModel::Interaction);
    let mut d = DMatrix::zeros(n, 2 + extra + q);
    d.set_column(0, &mi);
    d.set_column(1, &x);
    if extra == 1 {
        d.set_column(2, &mi.component_mul(&x));
    }
    if let Some(z) = ds.confounders() {
        d.columns_mut(2 + extra, q).copy_from(z);
    }
    d
}

fn nondegenerate(fit: &LeastSquares, y: DVectorView<'_, f64>) -> bool {
    fit.rss > DEGENERATE_RSS * y.norm_squared() && fit.rss > 0.0
}

/// Fit hypothesis `i` under `model`.
pub fn fit_hypothesis(
    ds: &Dataset,
    i: usize,
    model: OutcomeModel,
) -> std::result::Result<HypothesisEstimate, FailureReason> {
    let n = ds.n() as f64;
    let mi = ds.mediators().column(i);
    // An all-equal column carries no signal; report it as a design failure
    // rather than as the zero residual the mediator fit would give.
    if mi.iter().all(|&v| v == mi[0]) {
        return Err(FailureReason::RankDeficient { equation: Equation::Mediator });
    }
    let med = least_squares(&mediator_design(ds, i), mi)
        .ok_or(FailureReason::RankDeficient { equation: Equation::Mediator })?;
    if !nondegenerate(&med, mi) {
        return Err(FailureReason::DegenerateVariance { equation: Equation::Mediator });
    }
    let alpha_hat = med.coef[0];
    let var1 = n * med.sigma2() * med.inv_gram_diag[0];

    let yi = ds.outcomes().column(i);
    let design = outcome_design(ds, i, model);
    let (beta_hat, var2) = match model {
        OutcomeModel::Linear | OutcomeModel::Interaction => {
            let out = least_squares(&design, yi)
                .ok_or(FailureReason::RankDeficient { equation: Equation::Outcome })?;
            if !nondegenerate(&out, yi) {
                return Err(FailureReason::DegenerateVariance { equation: Equation::Outcome });
            }
            (out.coef[0], n * out.sigma2() * out.inv_gram_diag[0])
        }
        OutcomeModel::Logistic => {
            let ones = yi.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == yi.len() {
                return Err(FailureReason::SingleClassOutcome);
            }
            let fit = logistic_regression(&design, yi)?;
            (fit.coef[0], n * fit.inv_information[(0, 0)])
        }
    };
    if !(var1 > 0.0 && var2 > 0.0 && var1.is_finite() && var2.is_finite()) {
        return Err(FailureReason::DegenerateVariance {
            equation: if var1 > 0.0 { Equation::Outcome } else { Equation::Mediator },
        });
    }
    Ok(HypothesisEstimate { alpha_hat, beta_hat, var1, var2 })
}

/// Fit all hypotheses under `model`, collecting failures instead of aborting.
pub fn fit(ds: &Dataset, model: OutcomeModel) -> Result<CoefStats> {
    let q = ds.q();
    let p_outcome = 2 + q + usize::from(model == OutcomeModel::Interaction);
    if ds.n() <= p_outcome {
        return Err(Error::TooFewSamples { n: ds.n(), required: p_outcome });
    }
    match (model, ds.outcome_kind()) {
        (OutcomeModel::Logistic, OutcomeKind::Continuous) => {
            return Err(Error::InvalidParameter("logistic model needs binary outcomes".into()))
        }
        (OutcomeModel::Linear | OutcomeModel::Interaction, OutcomeKind::Binary) => {
            return Err(Error::InvalidParameter("linear outcome models need continuous outcomes".into()))
        }
        _ => {}
    }

    let fits: Vec<_> = (0..ds.m()).into_par_iter().map(|i| fit_hypothesis(ds, i, model)).collect();

    let sqrt_n = (ds.n() as f64).sqrt();
    let mut stats = CoefStats {
        a: Vec::new(),
        b: Vec::new(),
        var1: Vec::new(),
        var2: Vec::new(),
        n: ds.n(),
        hypotheses: Vec::new(),
        failures: Vec::new(),
    };
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(est) => {
                stats.a.push(sqrt_n * est.alpha_hat);
                stats.b.push(sqrt_n * est.beta_hat);
                stats.var1.push(est.var1);
                stats.var2.push(est.var2);
                stats.hypotheses.push(i);
            }
            Err(reason) => stats.failures.push(FitFailure { hypothesis: i, reason }),
        }
    }
    Ok(stats)
}

/// OLS mediator and outcome fits.
pub fn fit_linear(ds: &Dataset) -> Result<CoefStats> {
    fit(ds, OutcomeModel::Linear)
}

/// OLS mediator fit, logistic outcome fit.
pub fn fit_binary(ds: &Dataset) -> Result<CoefStats> {
    fit(ds, OutcomeModel::Logistic)
}

/// OLS fits with a mediator-by-exposure term in the outcome equation.
pub fn fit_interaction(ds: &Dataset) -> Result<CoefStats> {
    fit(ds, OutcomeModel::Interaction)
}
