//! Synthetic mediation datasets with known ground truth.
//!
//! Each hypothesis draws its latent state, coefficients and noise from its own
//! stream, so output depends only on the root seed, never on thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{class_index, FittedModel, GeneralMixtureModel, JointMixture, MixtureModel};
use crate::regression::{CoefStats, Dataset, OutcomeKind, OutcomeModel};
use crate::rng::substream;

/// `(pi00, pi10, pi01, pi11)` of the dense alternative.
pub const DENSE: [f64; 4] = [0.4, 0.2, 0.2, 0.2];
/// `(pi00, pi10, pi01, pi11)` of the sparse alternative.
pub const SPARSE: [f64; 4] = [0.88, 0.05, 0.05, 0.02];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `M = X alpha + e`, `Y = M beta + X gamma + eps`.
    Case1,
    /// Case 1 plus a standard normal confounder in both equations.
    Case2Confounded,
    /// Case 1 mediator with a logistic outcome.
    Binary,
    /// Case 1 plus an `M X theta` term in the outcome.
    Interaction,
    /// Two non-null components on each axis.
    Composite,
}

impl ScenarioKind {
    pub fn outcome_model(self) -> OutcomeModel {
        match self {
            ScenarioKind::Binary => OutcomeModel::Logistic,
            ScenarioKind::Interaction => OutcomeModel::Interaction,
            _ => OutcomeModel::Linear,
        }
    }

    /// `(d1, d2)` of the generating prior.
    pub fn components(self) -> (usize, usize) {
        match self {
            ScenarioKind::Composite => (2, 2),
            _ => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositeHyper {
    /// Locations of the two non-null `a` components, in units of `tau`.
    pub mu_mult: [f64; 2],
    pub theta_mult: [f64; 2],
    pub kappas: [f64; 2],
    pub psis: [f64; 2],
    /// Marginal state probabilities `(p0, p1, p2)` for `alpha`.
    pub p: [f64; 3],
    pub q: [f64; 3],
}

impl Default for CompositeHyper {
    fn default() -> Self {
        CompositeHyper {
            mu_mult: [0.2, 1.1],
            theta_mult: [-1.2, 0.3],
            kappas: [1.0, 2.0],
            psis: [4.0, 2.0],
            p: [0.8, 0.1, 0.1],
            q: [0.8, 0.1, 0.1],
        }
    }
}

/// Scenario-specific constants. Variances are variances, not standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub exposure_mean: f64,
    pub exposure_sd: f64,
    pub alpha_shift: f64,
    pub beta_shift: f64,
    pub kappa: f64,
    pub psi: f64,
    pub gamma_mean: f64,
    pub gamma_var: f64,
    pub interaction_mean: f64,
    pub interaction_var: f64,
    pub confounder_mediator: f64,
    pub confounder_outcome: f64,
    pub composite: CompositeHyper,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            exposure_mean: 2.0,
            exposure_sd: 0.75,
            alpha_shift: 0.2,
            beta_shift: 0.3,
            kappa: 1.0,
            psi: 4.0,
            gamma_mean: 1.0,
            gamma_var: 0.5,
            interaction_mean: 2.0,
            interaction_var: 0.25,
            confounder_mediator: 1.5,
            confounder_outcome: 0.3,
            composite: CompositeHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub kind: ScenarioKind,
    /// `(pi00, pi10, pi01, pi11)`; the composite scenario derives its weights from `hyper.composite`.
    pub pi_truth: [f64; 4],
    pub n: usize,
    pub m: usize,
    /// Degree of mediation. For the single-component kinds `alpha = alpha_shift * tau + h`;
    /// for the composite kind component locations of `sqrt(n) alpha` are `mu_mult * tau`.
    pub tau: f64,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub seed: u64,
}

impl SimScenario {
    pub fn new(kind: ScenarioKind, pi_truth: [f64; 4], n: usize, m: usize, tau: f64, seed: u64) -> Self {
        SimScenario { kind, pi_truth, n, m, tau, hyper: Hyper::default(), seed }
    }

    /// `tau = c / sqrt(n)`, the parametrisation of the single-component scenarios.
    pub fn with_scaled_tau(kind: ScenarioKind, pi_truth: [f64; 4], n: usize, m: usize, c: f64, seed: u64) -> Self {
        Self::new(kind, pi_truth, n, m, c / (n as f64).sqrt(), seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimScenario { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_simplex(&self.pi_truth)?;
        if self.kind == ScenarioKind::Composite {
            check_simplex(&self.hyper.composite.p)?;
            check_simplex(&self.hyper.composite.q)?;
        }
        if self.n < 4 || self.m == 0 {
            return Err(Error::InvalidParameter("scenario needs n >= 4 and m >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        let h = &self.hyper;
        let variances = [h.kappa, h.psi, h.gamma_var, h.interaction_var, h.exposure_sd];
        if variances.iter().chain(&h.composite.kappas).chain(&h.composite.psis).any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter("variances must be non-negative".into()));
        }
        Ok(())
    }

    /// Generating prior on the `sqrt(n)` scale.
    pub fn truth_model(&self) -> Result<FittedModel> {
        let root_n = (self.n as f64).sqrt();
        let h = &self.hyper;
        if self.kind == ScenarioKind::Composite {
            let c = &h.composite;
            let pi_joint = (0..3).map(|u| (0..3).map(|v| c.p[u] * c.q[v]).collect()).collect();
            let model = GeneralMixtureModel::new(
                pi_joint,
                vec![0.0, c.mu_mult[0] * self.tau, c.mu_mult[1] * self.tau],
                vec![0.0, c.theta_mult[0] * self.tau, c.theta_mult[1] * self.tau],
                vec![0.0, c.kappas[0], c.kappas[1]],
                vec![0.0, c.psis[0], c.psis[1]],
            )?;
            Ok(FittedModel::General(model))
        } else {
            let model = MixtureModel::new(
                self.pi_truth,
                h.alpha_shift * self.tau * root_n,
                h.beta_shift * self.tau * root_n,
                h.kappa,
                h.psi,
            )?;
            Ok(FittedModel::Bivariate(model))
        }
    }
}

fn check_simplex(w: &[f64]) -> Result<()> {
    if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{w:?} is not a probability vector")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HypothesisClass {
    H00,
    H10,
    H01,
    H11,
}

impl HypothesisClass {
    pub const ALL: [HypothesisClass; 4] = [Self::H00, Self::H10, Self::H01, Self::H11];

    pub fn from_indicators(alpha_nonzero: bool, beta_nonzero: bool) -> Self {
        Self::ALL[class_index(alpha_nonzero as usize, beta_nonzero as usize)]
    }

    pub fn is_alternative(self) -> bool {
        self == HypothesisClass::H11
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::H00 => "H00",
            Self::H10 => "H10",
            Self::H01 => "H01",
            Self::H11 => "H11",
        }
    }
}

impl std::str::FromStr for HypothesisClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown hypothesis class {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub labels: Vec<HypothesisClass>,
    pub true_alpha: Vec<f64>,
    pub true_beta: Vec<f64>,
    /// Interaction coefficients, for the interaction scenario.
    pub true_interaction: Option<Vec<f64>>,
    pub truth: FittedModel,
}

struct Column {
    label: HypothesisClass,
    alpha: f64,
    beta: f64,
    interaction: f64,
    mediator: Vec<f64>,
    outcome: Vec<f64>,
}

/// Draw a dataset from `sc`.
pub fn generate(sc: &SimScenario) -> Result<LabeledDataset> {
    sc.validate()?;
    let n = sc.n;
    let h = &sc.hyper;
    let mut shared = substream(sc.seed, 0);
    let exposure = Normal::new(h.exposure_mean, h.exposure_sd)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let x: Vec<f64> = (0..n).map(|_| exposure.sample(&mut shared)).collect();
    let z: Option<Vec<f64>> = (sc.kind == ScenarioKind::Case2Confounded)
        .then(|| (0..n).map(|_| shared.sample(StandardNormal)).collect());

    let columns: Vec<Column> =
        (0..sc.m).into_par_iter().map(|i| draw_column(sc, &x, z.as_deref(), &mut substream(sc.seed, i as u64 + 1))).collect();

    let mediators = DMatrix::from_iterator(n, sc.m, columns.iter().flat_map(|c| c.mediator.iter().copied()));
    let outcomes = DMatrix::from_iterator(n, sc.m, columns.iter().flat_map(|c| c.outcome.iter().copied()));
    let kind = if sc.kind == ScenarioKind::Binary { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let confounders = z.map(|z| DMatrix::from_vec(n, 1, z));
    let data = Dataset::new(DVector::from_vec(x), mediators, outcomes, confounders, kind)?;

    Ok(LabeledDataset {
        data,
        labels: columns.iter().map(|c| c.label).collect(),
        true_alpha: columns.iter().map(|c| c.alpha).collect(),
        true_beta: columns.iter().map(|c| c.beta).collect(),
        true_interaction: (sc.kind == ScenarioKind::Interaction).then(|| columns.iter().map(|c| c.interaction).collect()),
        truth: sc.truth_model()?,
    })
}

fn categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    // Rounding can leave `acc` a hair under 1; fall back to the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

fn draw_column(sc: &SimScenario, x: &[f64], z: Option<&[f64]>, rng: &mut ChaCha8Rng) -> Column {
    let n = sc.n;
    let h = &sc.hyper;
    let root_n = (n as f64).sqrt();

    let (alpha, beta, label) = if sc.kind == ScenarioKind::Composite {
        let c = &h.composite;
        let u = categorical(&c.p, rng);
        let v = categorical(&c.q, rng);
        let alpha = if u == 0 { 0.0 } else { normal(rng, c.mu_mult[u - 1] * sc.tau, c.kappas[u - 1]) / root_n };
        let beta = if v == 0 { 0.0 } else { normal(rng, c.theta_mult[v - 1] * sc.tau, c.psis[v - 1]) / root_n };
        (alpha, beta, HypothesisClass::from_indicators(u > 0, v > 0))
    } else {
        let label = HypothesisClass::ALL[categorical(&sc.pi_truth, rng)];
        let alpha = match label {
            HypothesisClass::H10 | HypothesisClass::H11 => h.alpha_shift * sc.tau + normal(rng, 0.0, h.kappa / n as f64),
            _ => 0.0,
        };
        let beta = match label {
            HypothesisClass::H01 | HypothesisClass::H11 => h.beta_shift * sc.tau + normal(rng, 0.0, h.psi / n as f64),
            _ => 0.0,
        };
        (alpha, beta, label)
    };
    let gamma = normal(rng, h.gamma_mean, h.gamma_var);
    let interaction =
        if sc.kind == ScenarioKind::Interaction { normal(rng, h.interaction_mean, h.interaction_var) } else { 0.0 };

    let mediator: Vec<f64> = (0..n)
        .map(|j| {
            let conf = z.map_or(0.0, |z| h.confounder_mediator * z[j]);
            x[j] * alpha + conf + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let outcome: Vec<f64> = (0..n)
        .map(|j| {
            let conf = z.map_or(0.0, |z| h.confounder_outcome * z[j]);
            let mean = mediator[j] * beta + x[j] * gamma + conf + mediator[j] * x[j] * interaction;
            if sc.kind == ScenarioKind::Binary {
                let p = 1.0 / (1.0 + (-mean).exp());
                Bernoulli::new(p).map_or(0.0, |b| b.sample(rng) as u8 as f64)
            } else {
                mean + rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect();
    Column { label, alpha, beta, interaction, mediator, outcome }
}

/// Natural indirect effect of moving the exposure from `x_star` to `x` with an
/// exposure-mediator interaction `theta`.
pub fn natural_indirect_effect(alpha: f64, beta: f64, theta: f64, x: f64, x_star: f64) -> f64 {
    alpha * beta * (x - x_star) + theta * alpha * x * (x - x_star)
}

/// Draw statistics directly from a prior with the given per-hypothesis noise
/// variances. Returns the statistics and the latent state `(u, v)` of each row.
pub fn sample_from_model(
    model: &impl JointMixture,
    var1: &[f64],
    var2: &[f64],
    n: usize,
    seed: u64,
) -> Result<(CoefStats, Vec<(usize, usize)>)> {
    let g = model.as_general();
    g.validate()?;
    if var1.len() != var2.len() {
        return Err(Error::DimensionMismatch("var1 and var2 lengths differ".into()));
    }
    let k2 = g.thetas.len();
    let flat: Vec<f64> = g.pi_joint.iter().flatten().copied().collect();
    let mut rng = substream(seed, 0);
    let mut a = Vec::with_capacity(var1.len());
    let mut b = Vec::with_capacity(var1.len());
    let mut states = Vec::with_capacity(var1.len());
    for i in 0..var1.len() {
        let s = categorical(&flat, &mut rng);
        let (u, v) = (s / k2, s % k2);
        a.push(normal(&mut rng, g.mus[u], var1[i] + g.kappas[u]));
        b.push(normal(&mut rng, g.thetas[v], var2[i] + g.psis[v]));
        states.push((u, v));
    }
    Ok((CoefStats::new(a, b, var1.to_vec(), var2.to_vec(), n)?, states))
}

/// Labels of latent states returned by [`sample_from_model`].
pub fn labels_of(states: &[(usize, usize)]) -> Vec<HypothesisClass> {
    states.iter().map(|&(u, v)| HypothesisClass::ALL[class_index(u, v)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_null_truth_has_zero_coefficients() {
        let sc = SimScenario::with_scaled_tau(ScenarioKind::Case1, [1.0, 0.0, 0.0, 0.0], 50, 200, 10.0, 1);
        let ds = generate(&sc).unwrap();
        assert!(ds.labels.iter().all(|&l| l == HypothesisClass::H00));
        assert!(ds.true_alpha.iter().chain(&ds.true_beta).all(|&v| v == 0.0));
    }

    #[test]
    fn labels_match_coefficient_pattern() {
        for kind in [ScenarioKind::Case1, ScenarioKind::Composite] {
            let sc = SimScenario::with_scaled_tau(kind, DENSE, 30, 300, 10.0, 2);
            let ds = generate(&sc).unwrap();
            for i in 0..300 {
                let expect = HypothesisClass::from_indicators(ds.true_alpha[i] != 0.0, ds.true_beta[i] != 0.0);
                assert_eq!(ds.labels[i], expect);
            }
        }
    }

    #[test]
    fn invalid_simplex_is_rejected() {
        let sc = SimScenario::new(ScenarioKind::Case1, [0.5, 0.5, 0.5, 0.0], 50, 10, 1.0, 0);
        assert!(generate(&sc).is_err());
    }

    #[test]
    fn nie_closed_form() {
        assert_eq!(natural_indirect_effect(1.0, 2.0, 3.0, 2.0, 1.0), 8.0);
        assert_eq!(natural_indirect_effect(0.7, -1.3, 0.0, 2.5, 0.5), 0.7 * -1.3 * 2.0);
        assert_eq!(natural_indirect_effect(0.7, -1.3, 4.0, 1.5, 1.5), 0.0);
    }

    #[test]
    fn composite_truth_weights_are_outer_product() {
        let sc = SimScenario::new(ScenarioKind::Composite, DENSE, 100, 10, 5.0, 0);
        let truth = sc.truth_model().unwrap();
        let [p00, p10, p01, p11] = truth.class_probabilities();
        assert!((p00 - 0.64).abs() < 1e-12);
        assert!((p10 - 0.16).abs() < 1e-12);
        assert!((p01 - 0.16).abs() < 1e-12);
        assert!((p11 - 0.04).abs() < 1e-12);
    }
}
