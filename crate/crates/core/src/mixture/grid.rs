use std::collections::BTreeMap;

/// One-dimensional search for a variance component `k` maximising
/// `sum_i r_i ln N(x_i; m, s_i + k)` with `m` held fixed.
///
/// Candidates are a fixed log-spaced coarse grid, a finer grid spanning the
/// neighbours of the best coarse point, and the current value. The coarse and
/// fine grids never move during a fit, so `ln(s_i + k)` and `1 / (s_i + k)` are
/// tabulated once and each search is a handful of dot products.
pub(crate) struct ScaleGrid {
    noise: Vec<f64>,
    coarse: Vec<Tabulated>,
    refine_points: usize,
    refined: BTreeMap<usize, Vec<Tabulated>>,
}

struct Tabulated {
    value: f64,
    ln: Vec<f64>,
    inv: Vec<f64>,
}

impl Tabulated {
    fn new(value: f64, noise: &[f64]) -> Self {
        let ln = noise.iter().map(|s| (s + value).ln()).collect();
        let inv = noise.iter().map(|s| 1.0 / (s + value)).collect();
        Tabulated { value, ln, inv }
    }

    fn objective(&self, r: &[f64], rd: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..r.len() {
            acc += r[i] * self.ln[i] + rd[i] * self.inv[i];
        }
        acc
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub(crate) fn log_space(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|g| (llo + (lhi - llo) * g as f64 / (points - 1) as f64).exp())
        .collect()
}

pub(crate) fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

impl ScaleGrid {
    pub(crate) fn new(noise: &[f64], lower: f64, upper: f64, points: usize, refine_points: usize) -> Self {
        let upper = if upper > lower { upper } else { lower * 10.0 };
        let coarse = log_space(lower, upper, points.max(2))
            .into_iter()
            .map(|v| Tabulated::new(v, noise))
            .collect();
        ScaleGrid { noise: noise.to_vec(), coarse, refine_points, refined: BTreeMap::new() }
    }

    /// Grid for statistics `x` with noise variances `noise`: `[lower, factor * var(x)]`.
    pub(crate) fn for_statistics(x: &[f64], noise: &[f64], lower: f64, factor: f64, points: usize, refine: usize) -> Self {
        Self::new(noise, lower, factor * sample_variance(x), points, refine)
    }

    fn direct(&self, value: f64, r: &[f64], rd: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..r.len() {
            let t = self.noise[i] + value;
            acc += r[i] * t.ln() + rd[i] / t;
        }
        acc
    }

    /// Best candidate for weights `r_i` and weighted squared deviations `rd_i = r_i (x_i - m)^2`.
    /// The current value wins ties, so the search never lowers the objective.
    pub(crate) fn search(&mut self, r: &[f64], rd: &[f64], current: f64) -> f64 {
        let mut best_value = current;
        let mut best = self.direct(current, r, rd);

        let mut best_cell = 0;
        let mut best_coarse = f64::INFINITY;
        for (g, t) in self.coarse.iter().enumerate() {
            let obj = t.objective(r, rd);
            if obj < best_coarse {
                best_coarse = obj;
                best_cell = g;
            }
        }
        if best_coarse < best {
            best = best_coarse;
            best_value = self.coarse[best_cell].value;
        }

        if self.refine_points > 0 {
            let last = self.coarse.len() - 1;
            let lo = self.coarse[best_cell.saturating_sub(1)].value;
            let hi = self.coarse[(best_cell + 1).min(last)].value;
            let (noise, points) = (&self.noise, self.refine_points);
            let cell = self.refined.entry(best_cell).or_insert_with(|| {
                log_space(lo, hi, points).into_iter().map(|v| Tabulated::new(v, noise)).collect()
            });
            for t in cell.iter() {
                let obj = t.objective(r, rd);
                if obj < best {
                    best = obj;
                    best_value = t.value;
                }
            }
        }
        best_value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_endpoints() {
        let g = log_space(1e-3, 10.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert!((g[4] - 10.0).abs() < 1e-12);
        assert!((g[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn search_lands_near_the_moment_estimate() {
        // Equal noise: the optimum is k = mean squared deviation - s.
        let noise = vec![1.0; 200];
        let dev: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let r = vec![1.0; 200];
        let rd: Vec<f64> = dev.iter().map(|d| d * d).collect();
        let mut grid = ScaleGrid::new(&noise, 1e-3, 100.0, 50, 10);
        let k = grid.search(&r, &rd, 0.5);
        assert!((k - 3.0).abs() < 0.1, "k = {k}");
    }

    #[test]
    fn current_value_kept_when_no_weight() {
        let noise = vec![1.0; 10];
        let mut grid = ScaleGrid::new(&noise, 1e-3, 10.0, 20, 5);
        assert_eq!(grid.search(&[0.0; 10], &[0.0; 10], 0.7), 0.7);
    }
}
