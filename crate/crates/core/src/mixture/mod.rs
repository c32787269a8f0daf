//! Empirical-Bayes mixture fits for `(a_i, b_i)`.
//!
//! Under state `(u, v)` the statistics are independent normals,
//! `a_i ~ N(mu_u, var1_i + kappa_u)` and `b_i ~ N(theta_v, var2_i + psi_v)`, with
//! state 0 on either axis meaning the coefficient is exactly zero. [`em_fit`]
//! handles the four-state model; [`em_fit_two_step`] fits the marginals first and
//! then only the joint weights.

mod bivariate;
mod grid;
mod model;
mod two_step;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use bivariate::{default_init_for, em_fit, em_step};
pub use model::{
    amle_ratio, class_index, e_step, loglik, FittedModel, GeneralMixtureModel, JointMixture, MixtureModel,
    Responsibilities,
};
pub use two_step::{em_fit_two_step, fit_marginal, MarginalFit};

use crate::density::ln_normal_pdf;
use crate::error::{Error, Result};
use crate::regression::CoefStats;

pub(crate) const MIN_HYPOTHESES: usize = 4;

/// EM controls. Defaults: 500 iterations, relative tolerance `1e-8`, three starts,
/// weight floor `1e-6`, a 50-point log grid on `[1e-3, 100 var]` refined by 10 points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub pi_floor: f64,
    pub grid_points: usize,
    pub refine_points: usize,
    pub grid_lower: f64,
    pub grid_upper_factor: f64,
    /// Explicit starting point for the four-state fit; data-driven when absent.
    pub init: Option<MixtureModel>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-8,
            restarts: 3,
            seed: 0,
            pi_floor: 1e-6,
            grid_points: 50,
            refine_points: 10,
            grid_lower: 1e-3,
            grid_upper_factor: 100.0,
            init: None,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.restarts == 0 || self.grid_points < 2 {
            return Err(Error::InvalidParameter("max_iter, restarts must be >= 1 and grid_points >= 2".into()));
        }
        if !(self.tol >= 0.0) || !(self.pi_floor >= 0.0 && self.pi_floor < 0.25) {
            return Err(Error::InvalidParameter("tol must be >= 0 and pi_floor in [0, 0.25)".into()));
        }
        if !(self.grid_lower > 0.0 && self.grid_upper_factor > 0.0) {
            return Err(Error::InvalidParameter("grid bounds must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration observed-data log-likelihood and fit diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Log-likelihood at each visited parameter value, ending at the returned one.
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A mixing weight hit the floor at some iteration.
    pub floor_active: bool,
    pub restart_logliks: Vec<f64>,
    pub best_restart: usize,
    /// Traces of the marginal fits of a two-step run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marginals: Vec<EmTrace>,
}

impl EmTrace {
    pub fn final_loglik(&self) -> f64 {
        self.loglik.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Which EM variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureStrategy {
    /// Four-state EM when `d1 = d2 = 1`, two-step otherwise.
    #[default]
    Auto,
    Bivariate,
    TwoStep,
}

/// Fit the prior with `d1` alternative components for `a` and `d2` for `b`.
pub fn fit_mixture(
    stats: &CoefStats,
    d1: usize,
    d2: usize,
    strategy: MixtureStrategy,
    config: &EmConfig,
) -> Result<(FittedModel, EmTrace)> {
    let bivariate = match strategy {
        MixtureStrategy::Auto => d1 == 1 && d2 == 1,
        MixtureStrategy::Bivariate => {
            if d1 != 1 || d2 != 1 {
                return Err(Error::InvalidParameter("the four-state EM needs d1 = d2 = 1".into()));
            }
            true
        }
        MixtureStrategy::TwoStep => false,
    };
    if bivariate {
        let (m, t) = em_fit(stats, config)?;
        Ok((FittedModel::Bivariate(m), t))
    } else {
        let (m, t) = em_fit_two_step(stats, d1, d2, config)?;
        Ok((FittedModel::General(m), t))
    }
}

/// Statistics sorted into a canonical order so fits do not depend on input order.
pub(crate) struct Canonical {
    a: Vec<f64>,
    b: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    ln0a: Vec<f64>,
    ln0b: Vec<f64>,
    hypotheses: Vec<usize>,
}

impl Canonical {
    pub(crate) fn new(stats: &CoefStats) -> Self {
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.sort_by(|&i, &j| {
            stats.a[i]
                .total_cmp(&stats.a[j])
                .then(stats.b[i].total_cmp(&stats.b[j]))
                .then(stats.var1[i].total_cmp(&stats.var1[j]))
                .then(stats.var2[i].total_cmp(&stats.var2[j]))
                .then(Ordering::Equal)
        });
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (a, b, s1, s2) = (pick(&stats.a), pick(&stats.b), pick(&stats.var1), pick(&stats.var2));
        let ln0a = a.iter().zip(&s1).map(|(&x, &s)| ln_normal_pdf(x, 0.0, s)).collect();
        let ln0b = b.iter().zip(&s2).map(|(&x, &s)| ln_normal_pdf(x, 0.0, s)).collect();
        let hypotheses = order.iter().map(|&i| stats.hypotheses[i]).collect();
        Canonical { a, b, s1, s2, ln0a, ln0b, hypotheses }
    }
}

/// Maximiser of `sum_j c_j ln p_j` over the simplex with `p_j >= floor`, where `c`
/// already sums to one. Returns the weights and whether the floor bound.
pub(crate) fn project_to_floor<const K: usize>(c: &[f64; K], floor: f64) -> ([f64; K], bool) {
    let v = project_to_floor_vec(c, floor);
    let mut out = [0.0; K];
    out.copy_from_slice(&v.0);
    (out, v.1)
}

pub(crate) fn project_to_floor_vec(c: &[f64], floor: f64) -> (Vec<f64>, bool) {
    let total: f64 = c.iter().sum();
    let c: Vec<f64> = c.iter().map(|v| v / total).collect();
    if floor <= 0.0 || c.iter().all(|&v| v >= floor) {
        return (c, false);
    }
    let k = c.len();
    let mut fixed = vec![false; k];
    loop {
        let free: f64 = (0..k).filter(|&j| !fixed[j]).map(|j| c[j]).sum();
        let remaining = 1.0 - floor * fixed.iter().filter(|&&f| f).count() as f64;
        let mut changed = false;
        for j in 0..k {
            if !fixed[j] && (free <= 0.0 || c[j] / free * remaining < floor) {
                fixed[j] = true;
                changed = true;
            }
        }
        if !changed {
            let p = (0..k).map(|j| if fixed[j] { floor } else { c[j] / free * remaining }).collect();
            return (p, true);
        }
    }
}

/// Starting location and scale for one axis: the trimmed mean of the top decile
/// of `|x|` that shares the majority sign, and its excess variance over the noise.
pub(crate) fn location_scale_init(x: &[f64], noise: &[f64]) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let top = x.len().div_ceil(10).max(1);
    let top = &idx[..top.min(x.len())];
    let sign = if top.iter().map(|&i| x[i]).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    let chosen: Vec<usize> = top.iter().copied().filter(|&i| x[i] * sign > 0.0).collect();
    location_scale_of(x, noise, &chosen)
}

pub(crate) fn location_scale_of(x: &[f64], noise: &[f64], chosen: &[usize]) -> (f64, f64) {
    if chosen.is_empty() {
        return (0.0, 0.0);
    }
    let mut vals: Vec<f64> = chosen.iter().map(|&i| x[i]).collect();
    vals.sort_by(f64::total_cmp);
    let trim = vals.len() / 10;
    let kept = &vals[trim..vals.len() - trim];
    let location = kept.iter().sum::<f64>() / kept.len() as f64;
    let mean_noise = chosen.iter().map(|&i| noise[i]).sum::<f64>() / chosen.len() as f64;
    let scale = (grid::sample_variance(&vals) - mean_noise).max(0.0);
    (location, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_projection_is_water_filling() {
        let (p, active) = project_to_floor(&[0.5, 0.5 - 1e-9, 1e-9, 0.0], 1e-6);
        assert!(active);
        assert_eq!(p[2], 1e-6);
        assert_eq!(p[3], 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] / p[1] - 0.5 / (0.5 - 1e-9)).abs() < 1e-12);

        let (q, active) = project_to_floor(&[0.25; 4], 1e-6);
        assert!(!active);
        assert_eq!(q, [0.25; 4]);
    }

    #[test]
    fn init_picks_majority_sign() {
        let x: Vec<f64> = (0..100).map(|i| if i < 8 { -5.0 - i as f64 * 0.01 } else { (i % 7) as f64 * 0.1 }).collect();
        let noise = vec![1.0; 100];
        let (loc, _) = location_scale_init(&x, &noise);
        assert!(loc < -4.9);
    }
}
