//! Brute-force reference implementations, written without nalgebra or the
//! crate's own helpers so they can check the library independently.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Solve `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let p = b.len();
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        for k in 0..p {
            a[col][k] /= d;
        }
        b[col] /= d;
        for row in 0..p {
            if row != col {
                let f = a[row][col];
                for k in 0..p {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    b
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = a.len();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let e: Vec<f64> = (0..p).map(|i| (i == j) as u8 as f64).collect();
            solve(a.to_vec(), e)
        })
        .collect();
    (0..p).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Textbook normal equations on design columns: `(coef, diag((D'D)^-1), rss / (n - p))`.
pub fn ols(cols: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let p = cols.len();
    let gram: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| dot(&cols[i], &cols[j])).collect()).collect();
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, y)).collect();
    let coef = solve(gram.clone(), rhs);
    let inv = invert(&gram);
    let rss: f64 = (0..y.len())
        .map(|r| {
            let fit: f64 = (0..p).map(|j| cols[j][r] * coef[j]).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    (coef, (0..p).map(|j| inv[j][j]).collect(), rss / (y.len() - p) as f64)
}

/// `(alpha_hat, beta_hat, var1, var2)` for one hypothesis with outcome design
/// `[m, x, extra..., z...]`.
pub fn linear_hypothesis(x: &[f64], m: &[f64], y: &[f64], extra: &[Vec<f64>], z: &[Vec<f64>]) -> [f64; 4] {
    let n = x.len() as f64;
    let mut med_cols = vec![x.to_vec()];
    med_cols.extend(z.iter().cloned());
    let (ca, da, sa) = ols(&med_cols, m);
    let mut out_cols = vec![m.to_vec(), x.to_vec()];
    out_cols.extend(extra.iter().cloned());
    out_cols.extend(z.iter().cloned());
    let (cb, db, sb) = ols(&out_cols, y);
    [ca[0], cb[0], n * sa * da[0], n * sb * db[0]]
}

/// Newton-Raphson logistic regression: `(coef, inverse information)`.
pub fn logistic(cols: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = cols.len();
    let n = y.len();
    let mut beta = vec![0.0; p];
    let info_at = |beta: &[f64]| {
        let mut grad = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for r in 0..n {
            let eta: f64 = (0..p).map(|j| cols[j][r] * beta[j]).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            for j in 0..p {
                grad[j] += cols[j][r] * (y[r] - mu);
                for k in 0..p {
                    info[j][k] += cols[j][r] * cols[k][r] * mu * (1.0 - mu);
                }
            }
        }
        (grad, info)
    };
    for _ in 0..100 {
        let (grad, info) = info_at(&beta);
        let step = solve(info, grad);
        for j in 0..p {
            beta[j] += step[j];
        }
        if step.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
    }
    let (_, info) = info_at(&beta);
    (beta.clone(), invert(&info))
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Four-state model as plain numbers, weights in `(00, 10, 01, 11)` order.
#[derive(Clone, Copy, Debug)]
pub struct Toy {
    pub w: [f64; 4],
    pub mu: f64,
    pub theta: f64,
    pub kappa: f64,
    pub psi: f64,
}

/// Component densities `(f00, f10, f01, f11)` at one point.
pub fn densities(t: &Toy, a: f64, b: f64, s1: f64, s2: f64) -> [f64; 4] {
    let a0 = normal_pdf(a, 0.0, s1);
    let a1 = normal_pdf(a, t.mu, s1 + t.kappa);
    let b0 = normal_pdf(b, 0.0, s2);
    let b1 = normal_pdf(b, t.theta, s2 + t.psi);
    [a0 * b0, a1 * b0, a0 * b1, a1 * b1]
}

pub fn lfdr(t: &Toy, a: f64, b: f64, s1: f64, s2: f64) -> f64 {
    let f = densities(t, a, b, s1, s2);
    let w = t.w;
    let null = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
    null / (null + w[3] * f[3])
}

pub fn loglik(t: &Toy, a: &[f64], b: &[f64], s1: &[f64], s2: &[f64]) -> f64 {
    (0..a.len())
        .map(|i| {
            let f = densities(t, a[i], b[i], s1[i], s2[i]);
            (0..4).map(|k| t.w[k] * f[k]).sum::<f64>().ln()
        })
        .sum()
}

/// One E-step plus the closed-form updates: `(weights, mu, theta)`, and the
/// responsibility vectors `(r_alpha, r_beta)` used by the scale updates.
pub fn em_iteration(t: &Toy, a: &[f64], b: &[f64], s1: &[f64], s2: &[f64]) -> ([f64; 4], f64, f64, Vec<f64>, Vec<f64>) {
    let m = a.len();
    let mut w = [0.0; 4];
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    for i in 0..m {
        let f = densities(t, a[i], b[i], s1[i], s2[i]);
        let joint: Vec<f64> = (0..4).map(|k| t.w[k] * f[k]).collect();
        let total: f64 = joint.iter().sum();
        let q: Vec<f64> = joint.iter().map(|v| v / total).collect();
        for k in 0..4 {
            w[k] += q[k] / m as f64;
        }
        ra.push(q[1] + q[3]);
        rb.push(q[2] + q[3]);
    }
    let wa: Vec<f64> = (0..m).map(|i| ra[i] / (s1[i] + t.kappa)).collect();
    let wb: Vec<f64> = (0..m).map(|i| rb[i] / (s2[i] + t.psi)).collect();
    let mu = dot(&wa, a) / wa.iter().sum::<f64>();
    let theta = dot(&wb, b) / wb.iter().sum::<f64>();
    (w, mu, theta, ra, rb)
}

/// Negative expected complete-data log-likelihood (times two, constants dropped)
/// as a function of the extra variance `k` of the non-null component.
pub fn scale_objective(k: f64, x: &[f64], s: &[f64], r: &[f64], loc: f64) -> f64 {
    (0..x.len()).map(|i| r[i] * ((s[i] + k).ln() + (x[i] - loc).powi(2) / (s[i] + k))).sum()
}

pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Threshold rule by its supremum definition: the largest candidate `t` whose
/// mean score over `{s <= t}` is at most `alpha`; reject every score `<= t`.
pub fn sup_scan(scores: &[f64], alpha: f64) -> Vec<bool> {
    let mut best: Option<f64> = None;
    for &t in scores {
        let below: Vec<f64> = scores.iter().copied().filter(|&s| s <= t).collect();
        let q = below.iter().sum::<f64>() / below.len() as f64;
        if q <= alpha && best.is_none_or(|b| t > b) {
            best = Some(t);
        }
    }
    scores.iter().map(|&s| best.is_some_and(|t| s <= t)).collect()
}

/// Two-sided Kolmogorov-Smirnov test of `x` against `cdf`: `(statistic, p-value)`.
pub fn ks_test(x: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let f = cdf(xi);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (d, p.clamp(0.0, 1.0))
}

/// Column `j` of a column-major buffer as a vector.
pub fn column(m: &nalgebra::DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}
