mod common;

use common::*;
use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use shiftkit::data::SampleSet;
use shiftkit::ratio::{
    eta_from_lambda, estimate_phi, estimate_ratio, joint_pair_sample, lambda_from_eta,
    pairing_sample, resampling_robustness, train_classifier, BinaryClassifierModel, CellFlag,
    ClassifierConfig, PhiConfig, ResampleSide, TrainingMeta,
};

const P0: [f64; 4] = [0.25; 4];
const P1: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

fn draw(probs: &[f64], names: &[&str], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let dist = WeightedIndex::new(probs).unwrap();
    (0..n).map(|_| names[dist.sample(rng)].to_string()).collect()
}

fn cells4(probs: &[f64], n: usize, rng: &mut ChaCha8Rng) -> SampleSet {
    SampleSet::from_cells(&draw(probs, &["c0", "c1", "c2", "c3"], n, rng), None).unwrap()
}

fn true_lambda(cell: &str) -> f64 {
    let i: usize = cell[1..].parse().unwrap();
    P1[i] / P0[i]
}

/// Model whose posteriors are set analytically: `η = p λ / (p λ + 1 − p)`.
fn analytic_model(lambda: &[f64], p: f64) -> BinaryClassifierModel {
    let logit = |e: f64| (e / (1.0 - e)).ln();
    BinaryClassifierModel {
        cells: (0..lambda.len()).map(|i| format!("c{i}")).collect(),
        cell_weights: lambda.iter().map(|l| logit(eta_from_lambda(*l, p))).collect(),
        intercept: 0.0,
        training_meta: TrainingMeta {
            p_hat: p,
            iterations: 0,
            final_loss: f64::NAN,
            auc: f64::NAN,
        },
        weight0: vec![1.0; lambda.len()],
        weight1: vec![1.0; lambda.len()],
    }
}

#[test]
fn analytic_inversion_is_exact() {
    let lambda: Vec<f64> = P1.iter().zip(P0).map(|(a, b)| a / b).collect();
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let est = estimate_ratio(&analytic_model(&lambda, p));
        assert_eq!(est.p_used, p);
        for (got, want) in est.values.iter().zip(&lambda) {
            assert!((got - want).abs() < 1e-12, "p={p}: {got} vs {want}");
        }
    }
    assert_eq!(lambda_from_eta(0.75, 0.5), 3.0);
    assert!((lambda_from_eta(0.2, 0.2) - 1.0).abs() < 1e-15);
    let flat = estimate_ratio(&analytic_model(&[1.0; 4], 0.3));
    assert!(flat.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn trained_posteriors_match_closed_form() {
    let mut r = rng(31);
    let s0 = cells4(&P0, 10_000, &mut r);
    let s1 = cells4(&P1, 10_000, &mut r);
    let model = train_classifier(&s0, &s1, &ClassifierConfig::default()).unwrap();
    let p = model.training_meta.p_hat;
    assert_eq!(p, 0.5);
    for (i, c) in model.cells.iter().enumerate() {
        let eta = model.eta(i);
        assert!(eta > 0.0 && eta < 1.0);
        assert!((eta - eta_from_lambda(true_lambda(c), p)).abs() < 0.02);
    }
    assert!(model.training_meta.auc > 0.5);
}

fn mean_max_error(n: usize, seeds: u64) -> f64 {
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut r = rng(1000 + seed);
        let s0 = cells4(&P0, n, &mut r);
        let s1 = cells4(&P1, n, &mut r);
        let est = estimate_ratio(&train_classifier(&s0, &s1, &ClassifierConfig::default()).unwrap());
        total += est
            .cells
            .iter()
            .zip(&est.values)
            .map(|(c, v)| (v - true_lambda(c)).abs())
            .fold(0.0, f64::max);
    }
    total / seeds as f64
}

#[test]
fn ratio_error_shrinks_with_sample_size() {
    let grid = [1_000, 3_162, 10_000, 31_623, 100_000];
    let errors: Vec<f64> = grid.iter().map(|n| mean_max_error(*n, 20)).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn cells_missing_from_one_sample_are_flagged() {
    let s0 = SampleSet::from_cells(&["a".into(), "b".into()], None).unwrap();
    let s1 = SampleSet::from_cells(&["a".into(), "c".into()], None).unwrap();
    let est = estimate_ratio(&train_classifier(&s0, &s1, &ClassifierConfig::default()).unwrap());
    let flag = |c: &str| est.flags[est.cells.iter().position(|x| x == c).unwrap()];
    assert_eq!(flag("a"), CellFlag::Ok);
    assert_eq!(flag("b"), CellFlag::AbsentInSample1);
    assert_eq!(flag("c"), CellFlag::AbsentInSample0);
    assert!(est.values.iter().all(|v| *v >= 0.0));
}

#[test]
fn resampling_factors_barely_move_ratios() {
    let mut r = rng(32);
    let s0 = cells4(&P0, 10_000, &mut r);
    let s1 = cells4(&P1, 10_000, &mut r);
    let config = ClassifierConfig::default();
    let same = resampling_robustness(&s0, &s1, &[1.0], ResampleSide::Sample1, 5, &config).unwrap();
    assert_eq!(same.max_deviation, 0.0);
    let rep = resampling_robustness(&s0, &s1, &[0.5, 2.0], ResampleSide::Sample1, 5, &config).unwrap();
    assert!(rep.max_deviation < 0.1, "{rep:?}");
}

fn joint_sample(p: &shiftkit::prob::JointTable, n: usize, rng: &mut ChaCha8Rng) -> SampleSet {
    let (xs, ys) = shiftkit::data::sample_cells(p, n, rng).unwrap();
    SampleSet::from_cells(&xs, Some(&ys)).unwrap()
}

#[test]
fn phi_of_independent_sample_is_flat() {
    let p = table(&[vec![0.12, 0.28], vec![0.18, 0.42]]);
    let mut total = 0.0;
    for seed in 0..5 {
        let mut r = rng(40 + seed);
        let est = estimate_phi(&joint_sample(&p, 10_000, &mut r), &PhiConfig::default()).unwrap();
        total += est.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    }
    assert!(total / 5.0 < 0.05);
}

#[test]
fn phi_of_worked_source() {
    let mut r = rng(41);
    let est = estimate_phi(&joint_sample(&worked(), 20_000, &mut r), &PhiConfig::default()).unwrap();
    // φ = P / (P_X P_Y) with P_X = (0.5, 0.5), P_Y = (0.4, 0.6)
    assert!((est.get("x0|y0").unwrap() - 0.3 / 0.2).abs() < 0.1);
    assert!((est.get("x1|y0").unwrap() - 0.1 / 0.2).abs() < 0.05);
    assert!((est.get("x0|y1").unwrap() - 0.2 / 0.3).abs() < 0.1);
    assert!((est.get("x1|y1").unwrap() - 0.4 / 0.3).abs() < 0.1);
}

#[test]
fn undersampling_an_imbalanced_pairing() {
    let mut r = rng(42);
    let n = 20_000;
    let joint = joint_sample(&worked(), n, &mut r);
    let config = PhiConfig {
        max_pairs: 50 * n,
        ..PhiConfig::default()
    };
    let pairs = pairing_sample(&joint, &config).unwrap();
    assert_eq!(pairs.len(), 50 * n);
    let rows = joint_pair_sample(&joint).unwrap();
    let rep = resampling_robustness(&pairs, &rows, &[0.02], ResampleSide::Sample0, 9, &config.classifier)
        .unwrap();
    assert!(rep.max_deviation < 0.1, "{rep:?}");
}
