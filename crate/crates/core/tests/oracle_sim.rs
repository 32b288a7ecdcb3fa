mod oracles;

use feeler_core::gp::{Prediction, Predictor};
use feeler_core::oracle::{OracleFixture, SyntheticOracle};
use feeler_core::proactive::label_round;
use feeler_core::{analysis, seed, DesignSpace, DesignVector, RoundPlan, UnitVector};

fn toy() -> SyntheticOracle {
    SyntheticOracle::new(DesignSpace::toy_2d(), OracleFixture::toy_2d()).unwrap()
}

/// Expected clamped, rounded rating by quadrature over the rater noise.
fn likert_expectation(truth: f64, noise: f64) -> f64 {
    let steps = 200_000;
    let lo = -8.0 * noise;
    let h = 16.0 * noise / steps as f64;
    (0..steps)
        .map(|i| {
            let e = lo + (i as f64 + 0.5) * h;
            let score = (truth + e).round_ties_even().clamp(1.0, 5.0);
            score * oracles::phi(e / noise) / noise * h
        })
        .sum()
}

#[test]
fn mean_rating_matches_quadrature() {
    let o = toy();
    let space = o.space().clone();
    for u in [[0.65, 0.35], [0.5, 0.5], [0.8, 0.6], [0.2, 0.9]] {
        let x = space.denormalize(&UnitVector(u.to_vec())).unwrap();
        let mean = (0..10_000u64).map(|s| f64::from(o.rate_likert(&x, s))).sum::<f64>() / 10_000.0;
        let want = likert_expectation(o.true_preference(&x), 0.5);
        assert!((mean - want).abs() < 0.05, "{u:?}: {mean} vs {want}");
    }
}

#[test]
fn peak_wins_against_distant_solution() {
    let o = toy();
    let far = o.space().denormalize(&UnitVector(vec![0.05, 0.95])).unwrap();
    let peak = o.peak();
    let wins = (0..1000u64)
        .filter(|&s| o.vote_pair((0, &peak), (1, &far), s).winner == 0)
        .count();
    assert!(wins as f64 / 1000.0 > 0.99, "{wins}");
}

#[test]
fn noiseless_vote_is_unanimous_and_symmetric() {
    let mut f = OracleFixture::toy_2d();
    f.rater_noise = 0.0;
    let o = SyntheticOracle::new(DesignSpace::toy_2d(), f).unwrap();
    let a = DesignVector(vec![70.0, 16.0]);
    let b = DesignVector(vec![50.0, 20.0]);
    let r = o.vote_pair((3, &a), (4, &b), 1);
    let winner = if o.true_preference(&a) > o.true_preference(&b) { 3 } else { 4 };
    assert_eq!(r.winner, winner);
    assert_eq!((r.votes_winner, r.votes_loser), (20, 0));
    let toy = toy();
    for s in 0..50 {
        let x = toy.vote_pair((3, &a), (4, &b), s);
        let y = toy.vote_pair((4, &b), (3, &a), s);
        assert_eq!(x, y);
    }
}

#[test]
fn simulated_round_labels_without_errors() {
    let o = toy();
    let space = o.space().clone();
    let batch = space.sample_uniform(5, 12);
    let plan = RoundPlan {
        round: 0,
        batch: batch.clone(),
        a: 1000,
        b: 12,
        duplicate_warning: false,
    };
    let records = o.simulate_ratings(&plan.solution_ids(), &batch, 0.1, 9);
    // 20 raters, 12 solutions plus one duplicate each
    assert_eq!(records.len(), 20 * 13);
    let (labels, retained) = label_round(&plan, &records).unwrap();
    assert_eq!(labels.len(), 12);
    assert!(retained.len() >= 15);
    for (l, x) in labels.iter().zip(&batch) {
        assert!((l.y - o.true_preference(x)).abs() < 0.75);
    }
}

struct Truth(SyntheticOracle);

impl Predictor for Truth {
    fn predict(&self, u: &UnitVector) -> Prediction {
        Prediction {
            mean: self.0.true_preference_unit(u),
            variance: 0.0,
        }
    }
}

struct Flat;

impl Predictor for Flat {
    fn predict(&self, _: &UnitVector) -> Prediction {
        Prediction {
            mean: 0.0,
            variance: 1.0,
        }
    }
}

/// Pearson chi-square statistic of a contingency table against the product
/// of its margins.
fn chi_square(counts: &[Vec<usize>]) -> f64 {
    let total: f64 = counts.iter().flatten().sum::<usize>() as f64;
    let rows: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..counts[0].len())
        .map(|j| counts.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();
    let mut stat = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            stat += (c as f64 - e).powi(2) / e;
        }
    }
    stat
}

#[test]
fn full_selection_is_independent() {
    // 99th percentile of chi-square with 16 degrees of freedom
    const CRITICAL: f64 = 31.999_926_908_815_2;
    let space = DesignSpace::toy_2d();
    let rejections = (0..10u64)
        .filter(|&s| {
            let j = analysis::variable_correlation(&Flat, &space, "box_height", "font_size", 5000, 5000, 5, 5, s).unwrap();
            assert_eq!(j.counts.iter().flatten().sum::<usize>(), 5000);
            chi_square(&j.counts) > CRITICAL
        })
        .count();
    assert!(rejections <= 1, "{rejections} of 10 seeds rejected independence");
}

#[test]
fn coupling_sign_shows_in_top_k_correlation() {
    for (a, positive) in [(8.0, false), (-8.0, true)] {
        let mut f = OracleFixture::toy_2d();
        f.peak = vec![0.5, 0.5];
        f.interaction = vec![vec![0.0, a], vec![a, 0.0]];
        let o = SyntheticOracle::new(DesignSpace::toy_2d(), f).unwrap();
        let space = o.space().clone();
        let j = analysis::variable_correlation(&Truth(o), &space, "box_height", "font_size", 500, 30_000, 10, 10, 4).unwrap();
        assert_eq!(j.correlation > 0.0, positive, "coupling {a}: r = {}", j.correlation);
    }
}

#[test]
fn top_k_mode_contains_peak_for_true_model() {
    let o = toy();
    let peak = o.peak();
    let space = o.space().clone();
    let h = analysis::top_k_distribution(&Truth(o), &space, 30_000, 500, "box_height", 30, seed::child_seed(1, "analysis")).unwrap();
    assert!(h.bin_contains(h.mode_bin(), peak.0[0]));
}
