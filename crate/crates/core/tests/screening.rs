mod common;

use common::{lfdr as oracle_lfdr, sup_scan, Toy};
use mlfdr::mixture::MixtureModel;
use mlfdr::rng::substream;
use mlfdr::screening::{compute_lfdr, oracle_select, step_up_select, step_up_select_with, LfdrScores, TieBreak};
use mlfdr::simulate::sample_from_model;
use mlfdr::CoefStats;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn score_at_origin_matches_hand_density_arithmetic() {
    let toy = Toy { w: [0.25; 4], mu: 2.0, theta: 2.0, kappa: 1.0, psi: 1.0 };
    let model = MixtureModel::new(toy.w, 2.0, 2.0, 1.0, 1.0).unwrap();
    let s = CoefStats::new(vec![0.0], vec![0.0], vec![1.0], vec![1.0], 10).unwrap();
    let got = compute_lfdr(&s, &model).unwrap();
    let want = oracle_lfdr(&toy, 0.0, 0.0, 1.0, 1.0);
    assert!((got.scores[0] - want).abs() < 1e-12);
    let f = common::densities(&toy, 0.0, 0.0, 1.0, 1.0);
    let total: f64 = f.iter().map(|v| 0.25 * v).sum();
    assert!((got.total_density(0) - total).abs() < 1e-12 * total);
    assert!((got.null_density_mass(0) - (total - 0.25 * f[3])).abs() < 1e-12 * total);
}

#[test]
fn scores_match_oracle_on_random_points() {
    let toy = Toy { w: [0.6, 0.15, 0.15, 0.1], mu: -1.5, theta: 2.5, kappa: 0.7, psi: 2.0 };
    let model = MixtureModel::new(toy.w, toy.mu, toy.theta, toy.kappa, toy.psi).unwrap();
    let mut rng = substream(1, 0);
    let rows: Vec<[f64; 4]> =
        (0..300).map(|_| [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)]).collect();
    let s = CoefStats::new(
        rows.iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| r[1]).collect(),
        rows.iter().map(|r| r[2]).collect(),
        rows.iter().map(|r| r[3]).collect(),
        10,
    )
    .unwrap();
    let got = compute_lfdr(&s, &model).unwrap();
    for (i, r) in rows.iter().enumerate() {
        let want = oracle_lfdr(&toy, r[0], r[1], r[2], r[3]);
        assert!((got.scores[i] - want).abs() < 1e-12, "row {i}");
    }
}

#[test]
fn no_alternative_mass_means_no_rejections() {
    let s = CoefStats::new(vec![5.0, -3.0, 0.0, 9.0], vec![4.0, 1.0, 0.0, 9.0], vec![1.0; 4], vec![1.0; 4], 10).unwrap();
    for w in [[0.5, 0.25, 0.25, 0.0], [1.0, 0.0, 0.0, 0.0]] {
        let model = MixtureModel::new(w, 3.0, 3.0, 1.0, 1.0).unwrap();
        let scores = compute_lfdr(&s, &model).unwrap();
        assert!(scores.scores.iter().all(|&v| v == 1.0));
        assert_eq!(oracle_select(&s, &model, 0.5).unwrap().k, 0);
    }
}

#[test]
fn extreme_statistics_do_not_underflow() {
    let model = MixtureModel::new([0.88, 0.05, 0.05, 0.02], 3.0, 3.0, 1.0, 1.0).unwrap();
    let s = CoefStats::new(vec![80.0, -60.0], vec![90.0, 0.0], vec![1.0; 2], vec![1.0; 2], 10).unwrap();
    let scores = compute_lfdr(&s, &model).unwrap();
    assert!(scores.underflow.is_empty());
    assert!(scores.scores[0] < 1e-100);
    assert!(scores.scores.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn step_up_equals_sup_definition() {
    let mut mismatches = 0;
    for seed in 0..100 {
        let mut rng = substream(seed, 0);
        let scores: Vec<f64> = (0..200).map(|_| rng.random::<f64>().powi(3)).collect();
        let alpha = rng.random_range(0.01..0.3);
        let got = step_up_select(&LfdrScores::from_scores(scores.clone()), alpha).unwrap();
        mismatches += (got.rejected != sup_scan(&scores, alpha)) as usize;
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn truth_and_fit_give_same_selection_when_equal() {
    let model = MixtureModel::new([0.7, 0.1, 0.1, 0.1], 3.0, 3.0, 1.0, 1.0).unwrap();
    let (s, _) = sample_from_model(&model, &[1.0; 300], &[1.0; 300], 100, 3).unwrap();
    let adaptive = step_up_select(&compute_lfdr(&s, &model).unwrap(), 0.1).unwrap();
    assert_eq!(adaptive, oracle_select(&s, &model, 0.1).unwrap());
}

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0..1.0f64, Just(0.0), Just(1.0), Just(0.05)], 1..150)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selection_is_maximal_and_controlled(s in scores_strategy(), alpha in 0.001..0.999f64) {
        let r = step_up_select(&LfdrScores::from_scores(s.clone()), alpha).unwrap();
        let rejected: Vec<f64> = s.iter().zip(&r.rejected).filter(|(_, &x)| x).map(|(&v, _)| v).collect();
        prop_assert_eq!(rejected.len(), r.k);
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        if r.k > 0 {
            prop_assert!(r.rejected_score_sum / r.k as f64 <= alpha);
            prop_assert_eq!(r.rejected_score_sum / r.k as f64, r.fdr_path[r.k - 1]);
            prop_assert_eq!(r.cutoff, sorted[r.k - 1]);
            prop_assert!(rejected.iter().all(|&v| v <= r.cutoff));
        }
        for j in r.k..s.len() {
            prop_assert!(r.fdr_path[j] > alpha);
        }
        for w in r.fdr_path.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-15);
        }
        // Everything strictly below the cutoff is rejected.
        prop_assert!(s.iter().zip(&r.rejected).all(|(&v, &x)| x || v >= r.cutoff));
    }

    #[test]
    fn rejection_set_is_permutation_invariant(s in prop::collection::vec(0.0..1.0f64, 1..100), alpha in 0.01..0.5f64, shift in 0usize..1000) {
        let m = s.len();
        let perm: Vec<usize> = (0..m).map(|i| (i + shift) % m).collect();
        let permuted: Vec<f64> = perm.iter().map(|&p| s[p]).collect();
        let a = step_up_select(&LfdrScores::from_scores(s), alpha).unwrap();
        let b = step_up_select(&LfdrScores::from_scores(permuted), alpha).unwrap();
        for (r, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.rejected[r], a.rejected[p]);
        }
    }

    #[test]
    fn random_ties_keep_the_count(s in scores_strategy(), alpha in 0.01..0.5f64, seed in any::<u64>()) {
        let scores = LfdrScores::from_scores(s);
        let a = step_up_select(&scores, alpha).unwrap();
        let b = step_up_select_with(&scores, alpha, TieBreak::Random { seed }).unwrap();
        prop_assert_eq!(a.k, b.k);
        prop_assert_eq!(a.cutoff, b.cutoff);
    }

    #[test]
    fn larger_alpha_rejects_a_superset(s in scores_strategy(), a1 in 0.01..0.5f64, gap in 0.0..0.4f64) {
        let scores = LfdrScores::from_scores(s);
        let small = step_up_select(&scores, a1).unwrap();
        let large = step_up_select(&scores, a1 + gap).unwrap();
        prop_assert!(small.rejected.iter().zip(&large.rejected).all(|(&x, &y)| !x || y));
    }

    #[test]
    fn more_alternative_mass_never_raises_scores(
        a in -6.0..6.0f64, b in -6.0..6.0f64, w in prop::array::uniform4(0.05..1.0f64), extra in 0.0..0.9f64
    ) {
        let t: f64 = w.iter().sum();
        let mut base = w.map(|v| v / t);
        base[3] = 1.0 - base[0] - base[1] - base[2];
        // Move a fraction of every null weight into the alternative.
        let mut shifted = base.map(|v| v * (1.0 - extra));
        shifted[3] = 1.0 - shifted[0] - shifted[1] - shifted[2];
        let s = CoefStats::new(vec![a], vec![b], vec![1.0], vec![1.0], 10).unwrap();
        let lo = compute_lfdr(&s, &MixtureModel::new(base, 2.0, -1.0, 1.0, 2.0).unwrap()).unwrap().scores[0];
        let hi = compute_lfdr(&s, &MixtureModel::new(shifted, 2.0, -1.0, 1.0, 2.0).unwrap()).unwrap().scores[0];
        prop_assert!(hi <= lo + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lo));
    }
}
