//! Joint local false discovery rates under the composite null and the step-up
//! rule that turns them into a rejection set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::JointMixture;
use crate::regression::CoefStats;

/// Posterior null probability of each hypothesis, with the log densities behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdrScores {
    pub scores: Vec<f64>,
    /// `ln(pi00 f00 + pi10 f10 + pi01 f01)` at each hypothesis.
    pub log_null_mass: Vec<f64>,
    /// `ln f` at each hypothesis.
    pub log_total_density: Vec<f64>,
    /// Hypotheses whose density underflowed; their score is set to 1.
    pub underflow: Vec<usize>,
    /// Original hypothesis index of each row.
    pub hypotheses: Vec<usize>,
}

impl LfdrScores {
    /// Scores without density bookkeeping, for hypotheses `0..len`.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let m = scores.len();
        LfdrScores {
            scores,
            log_null_mass: vec![f64::NAN; m],
            log_total_density: vec![f64::NAN; m],
            underflow: Vec::new(),
            hypotheses: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn null_density_mass(&self, row: usize) -> f64 {
        self.log_null_mass[row].exp()
    }

    pub fn total_density(&self, row: usize) -> f64 {
        self.log_total_density[row].exp()
    }
}

/// Evaluate the joint local FDR of every hypothesis under `model`.
pub fn compute_lfdr(stats: &CoefStats, model: &impl JointMixture) -> Result<LfdrScores> {
    let g = model.as_general();
    g.validate()?;
    let logs: Vec<(f64, f64)> = (0..stats.len())
        .into_par_iter()
        .map(|i| g.log_null_and_total(stats.a[i], stats.b[i], stats.var1[i], stats.var2[i]))
        .collect();
    let mut scores = Vec::with_capacity(logs.len());
    let mut underflow = Vec::new();
    for (row, &(null, total)) in logs.iter().enumerate() {
        if !total.is_finite() || null.is_nan() {
            underflow.push(stats.hypotheses[row]);
            scores.push(1.0);
        } else {
            scores.push((null - total).exp().clamp(0.0, 1.0));
        }
    }
    Ok(LfdrScores {
        scores,
        log_null_mass: logs.iter().map(|l| l.0).collect(),
        log_total_density: logs.iter().map(|l| l.1).collect(),
        underflow,
        hypotheses: stats.hypotheses.clone(),
    })
}

/// How equal scores are ordered before the step-up scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TieBreak {
    /// Lower row index first.
    #[default]
    Index,
    /// Seeded random order within each tie.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    /// Largest rejected score; 0 when nothing is rejected.
    pub cutoff: f64,
    pub rejected: Vec<bool>,
    pub k: usize,
    /// Running mean of the sorted scores at each rank (estimated FDR path).
    pub fdr_path: Vec<f64>,
    pub alpha: f64,
    /// Sum of the rejected scores, accumulated in ascending order.
    pub rejected_score_sum: f64,
    /// Original hypothesis index of each row.
    pub hypotheses: Vec<usize>,
}

impl ScreeningResult {
    /// Original indices of the rejected hypotheses, ascending.
    pub fn rejected_hypotheses(&self) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.rejected.iter().zip(&self.hypotheses).filter(|(r, _)| **r).map(|(_, &h)| h).collect();
        out.sort_unstable();
        out
    }

    /// Estimated FDR at the cutoff: mean score over the rejected set.
    pub fn estimated_fdr(&self) -> f64 {
        if self.k == 0 {
            0.0
        } else {
            self.fdr_path[self.k - 1]
        }
    }
}

/// Reject the longest prefix of ascending scores whose running mean stays at or below `alpha`.
pub fn step_up_select(scores: &LfdrScores, alpha: f64) -> Result<ScreeningResult> {
    step_up_select_with(scores, alpha, TieBreak::Index)
}

pub fn step_up_select_with(scores: &LfdrScores, alpha: f64, ties: TieBreak) -> Result<ScreeningResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let s = &scores.scores;
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.par_sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));
    if let TieBreak::Random { seed } = ties {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && s[order[end]] == s[order[start]] {
                end += 1;
            }
            order[start..end].shuffle(&mut rng);
            start = end;
        }
    }

    let mut fdr_path = Vec::with_capacity(s.len());
    let mut running = 0.0;
    let mut k = 0;
    let mut rejected_score_sum = 0.0;
    for (j, &i) in order.iter().enumerate() {
        running += s[i];
        let mean = running / (j + 1) as f64;
        fdr_path.push(mean);
        if mean <= alpha {
            k = j + 1;
            rejected_score_sum = running;
        }
    }
    let mut rejected = vec![false; s.len()];
    for &i in &order[..k] {
        rejected[i] = true;
    }
    let cutoff = if k == 0 { 0.0 } else { s[order[k - 1]] };
    Ok(ScreeningResult { cutoff, rejected, k, fdr_path, alpha, rejected_score_sum, hypotheses: scores.hypotheses.clone() })
}

/// Step-up selection with scores computed from the generating model.
pub fn oracle_select(stats: &CoefStats, truth: &impl JointMixture, alpha: f64) -> Result<ScreeningResult> {
    let scores = compute_lfdr(stats, truth)?;
    step_up_select(&scores, alpha)
}
