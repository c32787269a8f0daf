use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::density::{ln_normal_pdf, log_add_exp, log_sum_exp};
use crate::error::{Error, Result};
use crate::regression::CoefStats;

const SIMPLEX_TOL: f64 = 1e-12;

/// Four-state prior: `a` shifts by `mu` (extra variance `kappa`) when `alpha != 0`,
/// `b` shifts by `theta` (extra variance `psi`) when `beta != 0`.
///
/// `pi[j][k]` is the probability of state `(1{alpha != 0}, 1{beta != 0}) = (j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub pi: [[f64; 2]; 2],
    pub mu: f64,
    pub theta: f64,
    pub kappa: f64,
    pub psi: f64,
}

impl MixtureModel {
    /// Weights given in the `(pi00, pi10, pi01, pi11)` order.
    pub fn new(weights: [f64; 4], mu: f64, theta: f64, kappa: f64, psi: f64) -> Result<Self> {
        let [p00, p10, p01, p11] = weights;
        let model = MixtureModel { pi: [[p00, p01], [p10, p11]], mu, theta, kappa, psi };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        check_simplex(self.pi.iter().flatten().copied())?;
        if !(self.kappa >= 0.0 && self.psi >= 0.0) || !self.kappa.is_finite() || !self.psi.is_finite() {
            return Err(Error::InvalidParameter("kappa and psi must be finite and non-negative".into()));
        }
        if !self.mu.is_finite() || !self.theta.is_finite() {
            return Err(Error::InvalidParameter("mu and theta must be finite".into()));
        }
        Ok(())
    }

    /// `(pi00, pi10, pi01, pi11)`
    pub fn weights(&self) -> [f64; 4] {
        [self.pi[0][0], self.pi[1][0], self.pi[0][1], self.pi[1][1]]
    }

    pub fn to_general(&self) -> GeneralMixtureModel {
        GeneralMixtureModel {
            pi_joint: vec![self.pi[0].to_vec(), self.pi[1].to_vec()],
            mus: vec![0.0, self.mu],
            thetas: vec![0.0, self.theta],
            kappas: vec![0.0, self.kappa],
            psis: vec![0.0, self.psi],
        }
    }
}

/// `(d1 + 1) x (d2 + 1)` product mixture. Index 0 on either axis is the point mass at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralMixtureModel {
    /// `pi_joint[u][v] = P(xi1 = u, xi2 = v)`
    pub pi_joint: Vec<Vec<f64>>,
    pub mus: Vec<f64>,
    pub thetas: Vec<f64>,
    pub kappas: Vec<f64>,
    pub psis: Vec<f64>,
}

impl GeneralMixtureModel {
    pub fn new(
        pi_joint: Vec<Vec<f64>>,
        mus: Vec<f64>,
        thetas: Vec<f64>,
        kappas: Vec<f64>,
        psis: Vec<f64>,
    ) -> Result<Self> {
        let model = GeneralMixtureModel { pi_joint, mus, thetas, kappas, psis };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.mus.len();
        let cols = self.thetas.len();
        if rows < 2 || cols < 2 || self.kappas.len() != rows || self.psis.len() != cols {
            return Err(Error::InvalidParameter("component vectors have inconsistent lengths".into()));
        }
        if self.pi_joint.len() != rows || self.pi_joint.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter("pi_joint shape does not match components".into()));
        }
        if self.mus[0] != 0.0 || self.thetas[0] != 0.0 || self.kappas[0] != 0.0 || self.psis[0] != 0.0 {
            return Err(Error::InvalidParameter("component 0 must be the point mass at zero".into()));
        }
        if self.kappas.iter().chain(&self.psis).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("scales must be finite and non-negative".into()));
        }
        if self.mus.iter().chain(&self.thetas).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("locations must be finite".into()));
        }
        check_simplex(self.pi_joint.iter().flatten().copied())
    }

    pub fn d1(&self) -> usize {
        self.mus.len() - 1
    }

    pub fn d2(&self) -> usize {
        self.thetas.len() - 1
    }

    /// `(P(H00), P(H10), P(H01), P(H11))`
    pub fn class_probabilities(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (u, row) in self.pi_joint.iter().enumerate() {
            for (v, &p) in row.iter().enumerate() {
                out[class_index(u, v)] += p;
            }
        }
        out
    }

    /// Log densities of hypothesis `(a, b, s1, s2)`: `(ln null mass, ln total density)`.
    pub fn log_null_and_total(&self, a: f64, b: f64, s1: f64, s2: f64) -> (f64, f64) {
        let la: Vec<f64> = (0..self.mus.len()).map(|u| ln_normal_pdf(a, self.mus[u], s1 + self.kappas[u])).collect();
        let lb: Vec<f64> =
            (0..self.thetas.len()).map(|v| ln_normal_pdf(b, self.thetas[v], s2 + self.psis[v])).collect();
        let mut null_terms = Vec::with_capacity(la.len() + lb.len());
        let mut alt_terms = Vec::with_capacity(la.len() * lb.len());
        for (u, row) in self.pi_joint.iter().enumerate() {
            for (v, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let term = p.ln() + la[u] + lb[v];
                if u == 0 || v == 0 {
                    null_terms.push(term);
                } else {
                    alt_terms.push(term);
                }
            }
        }
        let null = log_sum_exp(&null_terms);
        let alt = log_sum_exp(&alt_terms);
        (null, log_add_exp(null, alt))
    }
}

/// Position of state `(u, v)` in `(H00, H10, H01, H11)` order.
pub fn class_index(u: usize, v: usize) -> usize {
    match (u > 0, v > 0) {
        (false, false) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (true, true) => 3,
    }
}

fn check_simplex(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!("mixing weight {w} is not a probability")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!("mixing weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// A fitted prior of either shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Bivariate(MixtureModel),
    General(GeneralMixtureModel),
}

impl FittedModel {
    pub fn class_probabilities(&self) -> [f64; 4] {
        self.as_general().class_probabilities()
    }
}

/// Anything that can be viewed as a product mixture over `(a, b)`.
pub trait JointMixture {
    fn as_general(&self) -> Cow<'_, GeneralMixtureModel>;
}

impl JointMixture for MixtureModel {
    fn as_general(&self) -> Cow<'_, GeneralMixtureModel> {
        Cow::Owned(self.to_general())
    }
}

impl JointMixture for GeneralMixtureModel {
    fn as_general(&self) -> Cow<'_, GeneralMixtureModel> {
        Cow::Borrowed(self)
    }
}

impl JointMixture for FittedModel {
    fn as_general(&self) -> Cow<'_, GeneralMixtureModel> {
        match self {
            FittedModel::Bivariate(m) => Cow::Owned(m.to_general()),
            FittedModel::General(g) => Cow::Borrowed(g),
        }
    }
}

impl<T: JointMixture + ?Sized> JointMixture for &T {
    fn as_general(&self) -> Cow<'_, GeneralMixtureModel> {
        (**self).as_general()
    }
}

/// Observed-data log-likelihood `sum_i ln f(a_i, b_i)`.
pub fn loglik(stats: &CoefStats, model: &impl JointMixture) -> Result<f64> {
    let model = model.as_general();
    let mut total = 0.0;
    for i in 0..stats.len() {
        let (_, lf) = model.log_null_and_total(stats.a[i], stats.b[i], stats.var1[i], stats.var2[i]);
        if !lf.is_finite() {
            return Err(Error::NonFiniteDensity(stats.hypotheses[i]));
        }
        total += lf;
    }
    Ok(total)
}

/// `loglik(fitted) - loglik(truth)`; non-negative when the fit is an approximate MLE.
pub fn amle_ratio(stats: &CoefStats, fitted: &impl JointMixture, truth: &impl JointMixture) -> Result<f64> {
    Ok(loglik(stats, fitted)? - loglik(stats, truth)?)
}

/// Row-stochastic posterior state probabilities, row-major `m x K`.
///
/// Column `u * (d2 + 1) + v` holds state `(u, v)`; for the four-state model that is
/// `00, 01, 10, 11`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub q: Vec<f64>,
    pub states: usize,
}

impl Responsibilities {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.q.chunks_exact(self.states)
    }

    pub fn len(&self) -> usize {
        self.q.len() / self.states
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Column means: the mixing-weight update.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.states];
        for row in self.rows() {
            for (s, &q) in sums.iter_mut().zip(row) {
                *s += q;
            }
        }
        let m = self.len() as f64;
        sums.iter().map(|s| s / m).collect()
    }
}

/// E-step: posterior probabilities of every latent state.
pub fn e_step(stats: &CoefStats, model: &impl JointMixture) -> Result<Responsibilities> {
    let g = model.as_general();
    let (k1, k2) = (g.mus.len(), g.thetas.len());
    let mut q = Vec::with_capacity(stats.len() * k1 * k2);
    let mut terms = vec![0.0; k1 * k2];
    for i in 0..stats.len() {
        for u in 0..k1 {
            let la = ln_normal_pdf(stats.a[i], g.mus[u], stats.var1[i] + g.kappas[u]);
            for v in 0..k2 {
                let lb = ln_normal_pdf(stats.b[i], g.thetas[v], stats.var2[i] + g.psis[v]);
                terms[u * k2 + v] = g.pi_joint[u][v].ln() + la + lb;
            }
        }
        let lf = log_sum_exp(&terms);
        if !lf.is_finite() {
            return Err(Error::NonFiniteDensity(stats.hypotheses[i]));
        }
        q.extend(terms.iter().map(|t| (t - lf).exp()));
    }
    Ok(Responsibilities { q, states: k1 * k2 })
}
