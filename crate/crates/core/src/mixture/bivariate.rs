use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::ScaleGrid;
use super::{project_to_floor, Canonical, EmConfig, EmTrace, MIN_HYPOTHESES};
use crate::density::ln_normal_pdf;
use crate::error::{Error, Result};
use crate::mixture::MixtureModel;
use crate::regression::CoefStats;

/// Standard four-component EM: exact updates for `pi`, `mu`, `theta`, grid search for
/// `kappa`, `psi`. Runs `config.restarts` starts and keeps the highest likelihood.
pub fn em_fit(stats: &CoefStats, config: &EmConfig) -> Result<(MixtureModel, EmTrace)> {
    config.validate()?;
    if stats.len() < MIN_HYPOTHESES {
        return Err(Error::TooFewHypotheses { found: stats.len(), required: MIN_HYPOTHESES });
    }
    let data = Canonical::new(stats);
    let mut fitter = Fitter::new(&data, config);

    let base = match &config.init {
        Some(init) => {
            init.validate()?;
            *init
        }
        None => default_init(&data),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(MixtureModel, EmTrace)> = None;
    let mut restart_logliks = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let start = if r == 0 { base } else { perturb(&base, &mut rng) };
        let (model, trace) = fitter.run(start)?;
        let ll = trace.final_loglik();
        restart_logliks.push(ll);
        if best.as_ref().is_none_or(|(_, t)| ll > t.final_loglik()) {
            best = Some((model, trace));
        }
    }
    let (model, mut trace) = best.expect("at least one restart");
    trace.best_restart = restart_logliks
        .iter()
        .position(|&l| l == trace.final_loglik())
        .unwrap_or(0);
    trace.restart_logliks = restart_logliks;
    Ok((model, trace))
}

/// One E-step followed by one M-step from `model`.
pub fn em_step(stats: &CoefStats, model: &MixtureModel, config: &EmConfig) -> Result<MixtureModel> {
    config.validate()?;
    model.validate()?;
    let data = Canonical::new(stats);
    let mut fitter = Fitter::new(&data, config);
    Ok(fitter.step(model)?.next)
}

/// Starting point derived from the data: mass where the largest statistics sit.
pub fn default_init_for(stats: &CoefStats) -> MixtureModel {
    default_init(&Canonical::new(stats))
}

fn default_init(data: &Canonical) -> MixtureModel {
    let (mu, kappa) = super::location_scale_init(&data.a, &data.s1);
    let (theta, psi) = super::location_scale_init(&data.b, &data.s2);
    MixtureModel { pi: [[0.85, 0.05], [0.05, 0.05]], mu, theta, kappa, psi }
}

fn perturb(base: &MixtureModel, rng: &mut ChaCha8Rng) -> MixtureModel {
    let p10 = rng.random_range(0.02..0.15);
    let p01 = rng.random_range(0.02..0.15);
    let p11 = rng.random_range(0.02..0.15);
    MixtureModel {
        pi: [[1.0 - p10 - p01 - p11, p01], [p10, p11]],
        mu: base.mu * rng.random_range(0.5..1.5),
        theta: base.theta * rng.random_range(0.5..1.5),
        kappa: base.kappa * rng.random_range(0.5..2.0) + rng.random_range(0.0..0.5),
        psi: base.psi * rng.random_range(0.5..2.0) + rng.random_range(0.0..0.5),
    }
}

struct Step {
    loglik: f64,
    next: MixtureModel,
    floor_active: bool,
}

struct Fitter<'a> {
    data: &'a Canonical,
    config: &'a EmConfig,
    grid_a: ScaleGrid,
    grid_b: ScaleGrid,
    r_a: Vec<f64>,
    r_b: Vec<f64>,
    rd: Vec<f64>,
}

impl<'a> Fitter<'a> {
    fn new(data: &'a Canonical, config: &'a EmConfig) -> Self {
        let grid = |x: &[f64], s: &[f64]| {
            ScaleGrid::for_statistics(x, s, config.grid_lower, config.grid_upper_factor, config.grid_points, config.refine_points)
        };
        let m = data.a.len();
        Fitter {
            data,
            config,
            grid_a: grid(&data.a, &data.s1),
            grid_b: grid(&data.b, &data.s2),
            r_a: vec![0.0; m],
            r_b: vec![0.0; m],
            rd: vec![0.0; m],
        }
    }

    fn run(&mut self, init: MixtureModel) -> Result<(MixtureModel, EmTrace)> {
        let mut model = init;
        let mut trace = EmTrace::default();
        let mut prev: Option<f64> = None;
        for _ in 0..self.config.max_iter {
            let step = self.step(&model)?;
            trace.loglik.push(step.loglik);
            if let Some(p) = prev {
                if (step.loglik - p).abs() <= self.config.tol * p.abs() {
                    trace.converged = true;
                    break;
                }
            }
            prev = Some(step.loglik);
            trace.floor_active |= step.floor_active;
            trace.iterations += 1;
            model = step.next;
        }
        if !trace.converged {
            let ll = self.step(&model)?.loglik;
            trace.loglik.push(ll);
        }
        Ok((model, trace))
    }

    fn step(&mut self, model: &MixtureModel) -> Result<Step> {
        let d = self.data;
        let m = d.a.len();
        let ln_pi = [
            model.pi[0][0].ln(),
            model.pi[0][1].ln(),
            model.pi[1][0].ln(),
            model.pi[1][1].ln(),
        ];
        let mut sums = [0.0; 4];
        let mut loglik = 0.0;
        for i in 0..m {
            let la = ln_normal_pdf(d.a[i], model.mu, d.s1[i] + model.kappa);
            let lb = ln_normal_pdf(d.b[i], model.theta, d.s2[i] + model.psi);
            let t = [
                ln_pi[0] + d.ln0a[i] + d.ln0b[i],
                ln_pi[1] + d.ln0a[i] + lb,
                ln_pi[2] + la + d.ln0b[i],
                ln_pi[3] + la + lb,
            ];
            let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::NonFiniteDensity(d.hypotheses[i]));
            }
            let e = t.map(|v| (v - max).exp());
            let total: f64 = e.iter().sum();
            loglik += max + total.ln();
            let q = e.map(|v| v / total);
            for (s, v) in sums.iter_mut().zip(q) {
                *s += v;
            }
            self.r_a[i] = q[2] + q[3];
            self.r_b[i] = q[1] + q[3];
        }

        let means = sums.map(|s| s / m as f64);
        let (pi, floor_active) = project_to_floor(&means, self.config.pi_floor);

        let mu = weighted_location(&d.a, &d.s1, &self.r_a, model.kappa).unwrap_or(model.mu);
        let theta = weighted_location(&d.b, &d.s2, &self.r_b, model.psi).unwrap_or(model.theta);

        for i in 0..m {
            let dev = d.a[i] - mu;
            self.rd[i] = self.r_a[i] * dev * dev;
        }
        let kappa = self.grid_a.search(&self.r_a, &self.rd, model.kappa);
        for i in 0..m {
            let dev = d.b[i] - theta;
            self.rd[i] = self.r_b[i] * dev * dev;
        }
        let psi = self.grid_b.search(&self.r_b, &self.rd, model.psi);

        let next = MixtureModel { pi: [[pi[0], pi[1]], [pi[2], pi[3]]], mu, theta, kappa, psi };
        Ok(Step { loglik, next, floor_active })
    }
}

/// `sum w_i x_i / sum w_i` with `w_i = r_i / (s_i + k)`; `None` when the weights vanish.
pub(crate) fn weighted_location(x: &[f64], s: &[f64], r: &[f64], k: f64) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        let w = r[i] / (s[i] + k);
        num += w * x[i];
        den += w;
    }
    (den > 0.0 && den.is_finite()).then(|| num / den)
}
