use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bivariate::weighted_location;
use super::grid::ScaleGrid;
use super::{location_scale_init, location_scale_of, project_to_floor_vec, Canonical, EmConfig, EmTrace, MIN_HYPOTHESES};
use crate::density::ln_normal_pdf;
use crate::error::{Error, Result};
use crate::mixture::GeneralMixtureModel;
use crate::regression::CoefStats;

/// Univariate mixture `sum_u w_u N(means_u, noise_i + scales_u)` with component 0 fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Two-step EM. Step 1 fits the `a` and `b` marginals separately; step 2 freezes
/// their locations and scales and runs EM over the joint weights only.
pub fn em_fit_two_step(
    stats: &CoefStats,
    d1: usize,
    d2: usize,
    config: &EmConfig,
) -> Result<(GeneralMixtureModel, EmTrace)> {
    config.validate()?;
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidParameter("d1 and d2 must be at least 1".into()));
    }
    if stats.len() < MIN_HYPOTHESES {
        return Err(Error::TooFewHypotheses { found: stats.len(), required: MIN_HYPOTHESES });
    }
    let data = Canonical::new(stats);
    let (fit_a, trace_a) = marginal_em(&data.a, &data.s1, &data.ln0a, d1, config, config.seed)?;
    let (fit_b, trace_b) = marginal_em(&data.b, &data.s2, &data.ln0b, d2, config, config.seed.wrapping_add(1))?;

    let m = data.a.len();
    let (k1, k2) = (d1 + 1, d2 + 1);
    let mut la = Vec::with_capacity(m * k1);
    let mut lb = Vec::with_capacity(m * k2);
    for i in 0..m {
        la.push(data.ln0a[i]);
        for u in 1..k1 {
            la.push(ln_normal_pdf(data.a[i], fit_a.means[u], data.s1[i] + fit_a.scales[u]));
        }
        lb.push(data.ln0b[i]);
        for v in 1..k2 {
            lb.push(ln_normal_pdf(data.b[i], fit_b.means[v], data.s2[i] + fit_b.scales[v]));
        }
    }

    let mut pi: Vec<f64> = (0..k1 * k2).map(|s| fit_a.weights[s / k2] * fit_b.weights[s % k2]).collect();
    pi = project_to_floor_vec(&pi, config.pi_floor).0;
    let mut trace = EmTrace::default();
    let mut prev: Option<f64> = None;
    let mut terms = vec![0.0; k1 * k2];
    let mut step = |pi: &[f64]| -> Result<(f64, Vec<f64>, bool)> {
        let ln_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
        let mut sums = vec![0.0; k1 * k2];
        let mut ll = 0.0;
        for i in 0..m {
            for u in 0..k1 {
                for v in 0..k2 {
                    terms[u * k2 + v] = ln_pi[u * k2 + v] + la[i * k1 + u] + lb[i * k2 + v];
                }
            }
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::NonFiniteDensity(data.hypotheses[i]));
            }
            let mut total = 0.0;
            for t in terms.iter_mut() {
                *t = (*t - max).exp();
                total += *t;
            }
            ll += max + total.ln();
            for (s, t) in sums.iter_mut().zip(&terms) {
                *s += t / total;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / m as f64).collect();
        let (next, floor) = project_to_floor_vec(&means, config.pi_floor);
        Ok((ll, next, floor))
    };
    for _ in 0..config.max_iter {
        let (ll, next, floor) = step(&pi)?;
        trace.loglik.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() <= config.tol * p.abs() {
                trace.converged = true;
                break;
            }
        }
        prev = Some(ll);
        trace.floor_active |= floor;
        trace.iterations += 1;
        pi = next;
    }
    if !trace.converged {
        let (ll, _, _) = step(&pi)?;
        trace.loglik.push(ll);
    }
    trace.restart_logliks = vec![trace.final_loglik()];
    trace.marginals = vec![trace_a, trace_b];

    let model = GeneralMixtureModel {
        pi_joint: pi.chunks(k2).map(|r| r.to_vec()).collect(),
        mus: fit_a.means,
        thetas: fit_b.means,
        kappas: fit_a.scales,
        psis: fit_b.scales,
    };
    Ok((model, trace))
}

/// Fit `d` non-null components to statistics `x` with noise variances `noise`.
pub fn fit_marginal(x: &[f64], noise: &[f64], d: usize, config: &EmConfig) -> Result<(MarginalFit, EmTrace)> {
    config.validate()?;
    if x.len() != noise.len() {
        return Err(Error::DimensionMismatch("statistics and noise lengths differ".into()));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    if x.len() < MIN_HYPOTHESES {
        return Err(Error::TooFewHypotheses { found: x.len(), required: MIN_HYPOTHESES });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(noise[i].total_cmp(&noise[j])));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ss: Vec<f64> = order.iter().map(|&i| noise[i]).collect();
    let ln0: Vec<f64> = xs.iter().zip(&ss).map(|(&v, &s)| ln_normal_pdf(v, 0.0, s)).collect();
    marginal_em(&xs, &ss, &ln0, d, config, config.seed)
}

fn marginal_init(x: &[f64], noise: &[f64], d: usize) -> MarginalFit {
    let mut means = vec![0.0];
    let mut scales = vec![0.0];
    if d == 1 {
        let (loc, sc) = location_scale_init(x, noise);
        means.push(loc);
        scales.push(sc);
    } else {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
        let top = x.len().div_ceil(10).max(2 * d).min(x.len());
        let mut chosen = idx[..top].to_vec();
        chosen.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
        for u in 0..d {
            let lo = u * chosen.len() / d;
            let hi = (u + 1) * chosen.len() / d;
            let (loc, sc) = location_scale_of(x, noise, &chosen[lo..hi]);
            means.push(loc);
            scales.push(sc);
        }
    }
    let mut weights = vec![0.85];
    weights.extend(std::iter::repeat_n(0.15 / d as f64, d));
    MarginalFit { weights, means, scales }
}

fn perturb(base: &MarginalFit, rng: &mut ChaCha8Rng) -> MarginalFit {
    let d = base.means.len() - 1;
    let mut weights = vec![0.0];
    for _ in 0..d {
        weights.push(rng.random_range(0.02..0.15) / d.max(1) as f64 * 2.0);
    }
    weights[0] = 1.0 - weights.iter().sum::<f64>();
    let mut means = vec![0.0];
    let mut scales = vec![0.0];
    for u in 1..=d {
        means.push(base.means[u] * rng.random_range(0.5..1.5));
        scales.push(base.scales[u] * rng.random_range(0.5..2.0) + rng.random_range(0.0..0.5));
    }
    MarginalFit { weights, means, scales }
}

fn marginal_em(
    x: &[f64],
    noise: &[f64],
    ln0: &[f64],
    d: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<(MarginalFit, EmTrace)> {
    let m = x.len();
    let k = d + 1;
    let mut grid =
        ScaleGrid::for_statistics(x, noise, config.grid_lower, config.grid_upper_factor, config.grid_points, config.refine_points);
    let mut resp = vec![vec![0.0; m]; k];
    let mut rd = vec![0.0; m];
    let mut terms = vec![0.0; k];

    let mut step = |fit: &MarginalFit| -> Result<(f64, MarginalFit, bool)> {
        let ln_w: Vec<f64> = fit.weights.iter().map(|w| w.ln()).collect();
        let mut sums = vec![0.0; k];
        let mut ll = 0.0;
        for i in 0..m {
            terms[0] = ln_w[0] + ln0[i];
            for u in 1..k {
                terms[u] = ln_w[u] + ln_normal_pdf(x[i], fit.means[u], noise[i] + fit.scales[u]);
            }
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::Numerical("marginal mixture density vanished".into()));
            }
            let mut total = 0.0;
            for t in terms.iter_mut() {
                *t = (*t - max).exp();
                total += *t;
            }
            ll += max + total.ln();
            for u in 0..k {
                let r = terms[u] / total;
                resp[u][i] = r;
                sums[u] += r;
            }
        }
        let means_w: Vec<f64> = sums.iter().map(|s| s / m as f64).collect();
        let (weights, floor) = project_to_floor_vec(&means_w, config.pi_floor);
        let mut next = MarginalFit { weights, means: fit.means.clone(), scales: fit.scales.clone() };
        for u in 1..k {
            let loc = weighted_location(x, noise, &resp[u], fit.scales[u]).unwrap_or(fit.means[u]);
            for i in 0..m {
                let dev = x[i] - loc;
                rd[i] = resp[u][i] * dev * dev;
            }
            next.means[u] = loc;
            next.scales[u] = grid.search(&resp[u], &rd, fit.scales[u]);
        }
        Ok((ll, next, floor))
    };

    let base = marginal_init(x, noise, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(MarginalFit, EmTrace)> = None;
    let mut restart_logliks = Vec::new();
    for r in 0..config.restarts {
        let mut fit = if r == 0 { base.clone() } else { perturb(&base, &mut rng) };
        let mut trace = EmTrace::default();
        let mut prev: Option<f64> = None;
        for _ in 0..config.max_iter {
            let (ll, next, floor) = step(&fit)?;
            trace.loglik.push(ll);
            if let Some(p) = prev {
                if (ll - p).abs() <= config.tol * p.abs() {
                    trace.converged = true;
                    break;
                }
            }
            prev = Some(ll);
            trace.floor_active |= floor;
            trace.iterations += 1;
            fit = next;
        }
        if !trace.converged {
            let (ll, _, _) = step(&fit)?;
            trace.loglik.push(ll);
        }
        let ll = trace.final_loglik();
        restart_logliks.push(ll);
        if best.as_ref().is_none_or(|(_, t)| ll > t.final_loglik()) {
            best = Some((fit, trace));
        }
    }
    let (fit, mut trace) = best.expect("at least one restart");
    trace.best_restart = restart_logliks.iter().position(|&l| l == trace.final_loglik()).unwrap_or(0);
    trace.restart_logliks = restart_logliks;
    Ok((fit, trace))
}
