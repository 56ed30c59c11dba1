#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use shiftkit::prob::{
    dependence_density, kl_divergence, marginal_density, relative_density,
    reweighted_conditional_expectation, Direction, JointTable, MarginalAxis, RelativeDensity,
};
use shiftkit::Error;

#[test]
fn worked_marginals_and_conditionals() {
    let p = worked();
    let (px, py) = p.marginals();
    assert!(max_abs(&px, &[0.5, 0.5]) < 1e-15);
    assert!(max_abs(&py, &[0.4, 0.6]) < 1e-15);
    let c = p.conditionals(Direction::LabelGivenFeature);
    assert!(max_abs(c.row(0).unwrap(), &[0.6, 0.4]) < 1e-15);
    assert!(max_abs(c.row(1).unwrap(), &[0.2, 0.8]) < 1e-15);
}

#[test]
fn point_mass_and_null_rows() {
    let p = table(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
    assert_eq!(p.marginals(), (vec![0.0, 1.0], vec![1.0, 0.0]));
    let c = p.conditionals(Direction::LabelGivenFeature);
    assert_eq!(c.support_mask(), vec![false, true]);
    let d = p.conditionals(Direction::FeatureGivenLabel);
    assert_eq!(d.support_mask(), vec![true, false]);
}

#[test]
fn label_shift_density_and_its_marginals() {
    let p = worked();
    let q = table(&[vec![0.45, 0.2 * 2.0 / 3.0], vec![0.15, 0.4 * 2.0 / 3.0]]);
    let f = relative_density(&q, &p).unwrap();
    for x in 0..2 {
        assert!((f.at(x, 0) - 1.5).abs() < 1e-12);
        assert!((f.at(x, 1) - 2.0 / 3.0).abs() < 1e-12);
    }
    let h = marginal_density(&f, &p, MarginalAxis::Feature).unwrap();
    let qx = [0.45 + 0.4 / 3.0, 0.15 + 0.8 / 3.0];
    assert!(max_abs(h.values(), &[qx[0] / 0.5, qx[1] / 0.5]) < 1e-12);
    let g = marginal_density(&f, &p, MarginalAxis::Label).unwrap();
    assert!(max_abs(g.values(), &[1.5, 2.0 / 3.0]) < 1e-12);
}

#[test]
fn covariate_shift_marginal_densities() {
    let p = worked();
    let q = table(&[vec![0.15, 0.10], vec![0.15, 0.60]]);
    let f = relative_density(&q, &p).unwrap();
    let h = marginal_density(&f, &p, MarginalAxis::Feature).unwrap();
    let g = marginal_density(&f, &p, MarginalAxis::Label).unwrap();
    assert!(max_abs(h.values(), &[0.5, 1.5]) < 1e-12);
    // Q_Y = (0.3, 0.7) over P_Y = (0.4, 0.6)
    assert!(max_abs(g.values(), &[0.3 / 0.4, 0.7 / 0.6]) < 1e-12);
}

#[test]
fn absolute_continuity_violation_names_cells() {
    let p = table(&[vec![0.5, 0.0], vec![0.25, 0.25]]);
    let q = table(&[vec![0.4, 0.1], vec![0.25, 0.25]]);
    match relative_density(&q, &p) {
        Err(Error::AbsoluteContinuityViolation { cells }) => {
            assert_eq!(cells, vec![("x0".to_string(), "y1".to_string())])
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn reweighted_expectation_of_label_value() {
    let p = worked();
    let q = table(&[vec![0.45, 0.2 * 2.0 / 3.0], vec![0.15, 0.4 * 2.0 / 3.0]]);
    let f = relative_density(&q, &p).unwrap();
    let t = [0.0, 1.0, 0.0, 1.0];
    let v = reweighted_conditional_expectation(&t, &f, &p, MarginalAxis::Feature, 0).unwrap();
    // (0.4·2/3) / (0.6·1.5 + 0.4·2/3)
    let want = (0.4 * 2.0 / 3.0) / (0.9 + 0.8 / 3.0);
    assert!((v - want).abs() < 1e-12);
    assert!((v - 0.2286).abs() < 5e-5);

    let ones = RelativeDensity::joint(vec![1.0; 4], 2).unwrap();
    let v = reweighted_conditional_expectation(&t, &ones, &p, MarginalAxis::Feature, 1).unwrap();
    assert!((v - 0.8).abs() < 1e-12);

    let covariate = RelativeDensity::joint(vec![2.0, 2.0, 0.0, 0.0], 2).unwrap();
    assert!(matches!(
        reweighted_conditional_expectation(&t, &covariate, &p, MarginalAxis::Feature, 1),
        Err(Error::ZeroTargetMarginal { .. })
    ));
}

#[test]
fn kl_examples() {
    let base = [0.5, 0.5];
    let h = RelativeDensity::feature(vec![0.5, 1.5]).unwrap();
    let one = RelativeDensity::feature(vec![1.0, 1.0]).unwrap();
    let want = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
    assert!((kl_divergence(&h, &one, &base).unwrap() - want).abs() < 1e-15);
    assert!((want - 0.1308).abs() < 5e-5);
    assert_eq!(kl_divergence(&h, &h, &base).unwrap(), 0.0);
    let zero = RelativeDensity::feature(vec![2.0, 0.0]).unwrap();
    assert!(matches!(
        kl_divergence(&h, &zero, &base),
        Err(Error::SupportMismatch { .. })
    ));
}

#[test]
fn dependence_density_examples() {
    let phi = dependence_density(&worked()).unwrap();
    assert!((phi.at(0, 0) - 1.5).abs() < 1e-12);
    assert!((phi.at(1, 0) - 0.5).abs() < 1e-12);
    let indep = table(&[vec![0.12, 0.28], vec![0.18, 0.42]]);
    let phi = dependence_density(&indep).unwrap();
    assert!(phi.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    let empty = table(&[vec![0.5, 0.5], vec![0.0, 0.0]]);
    assert!(matches!(dependence_density(&empty), Err(Error::ZeroMarginal { .. })));
}

#[test]
fn dependence_density_normalizes_both_ways() {
    let mut r = rng(101);
    for _ in 0..1000 {
        let p = random_table(&mut r, 8, 6);
        let (px, py) = p.marginals();
        let phi = dependence_density(&p).unwrap();
        for x in 0..p.n_features() {
            let s: f64 = (0..p.n_labels()).map(|y| phi.at(x, y) * py[y]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        for y in 0..p.n_labels() {
            let s: f64 = (0..p.n_features()).map(|x| phi.at(x, y) * px[x]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }
}

fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 2usize..5).prop_flat_map(|(nx, ny)| {
        (Just(nx), Just(ny), prop::collection::vec(0.0f64..1.0, nx * ny))
    })
}

fn normalized((nx, ny, w): (usize, usize, Vec<f64>)) -> Option<JointTable> {
    let total: f64 = w.iter().sum();
    (total > 1e-3).then(|| JointTable::normalized(space(nx, ny), w).unwrap())
}

proptest! {
    #[test]
    fn construction_accepts_exactly_valid_tables(
        (nx, ny, w) in table_strategy(),
        bump in prop_oneof![Just(0.0), Just(1e-6), Just(-1e-6)],
        negate in any::<bool>(),
    ) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-3);
        let mut mass: Vec<f64> = w.iter().map(|v| v / total).collect();
        mass[0] += bump;
        if negate {
            let k = mass.len() - 1;
            mass[k] = -mass[k] - 1e-3;
        }
        let result = JointTable::new(space(nx, ny), mass.clone());
        let sum: f64 = mass.iter().sum();
        let valid = mass.iter().all(|m| *m >= 0.0) && (sum - 1.0).abs() <= 1e-12;
        prop_assert_eq!(result.is_ok(), valid);
        if let Ok(t) = result {
            let (px, py) = t.marginals();
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((py.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fubini_consistency(tab in table_strategy(), t in prop::collection::vec(-5.0f64..5.0, 25)) {
        let Some(p) = normalized(tab) else { return Ok(()) };
        let (px, py) = p.marginals();
        let (nx, ny) = (p.n_features(), p.n_labels());
        let pyx = p.conditionals(Direction::LabelGivenFeature);
        let pxy = p.conditionals(Direction::FeatureGivenLabel);
        let tv = |x: usize, y: usize| t[x * ny + y];
        let lhs: f64 = (0..nx)
            .filter_map(|x| pyx.row(x).map(|r| px[x] * (0..ny).map(|y| tv(x, y) * r[y]).sum::<f64>()))
            .sum();
        let rhs: f64 = (0..ny)
            .filter_map(|y| pxy.row(y).map(|r| py[y] * (0..nx).map(|x| tv(x, y) * r[x]).sum::<f64>()))
            .sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conditional_rows_are_stochastic_and_masked(tab in table_strategy(), zero_row in 0usize..6) {
        let (nx, ny, mut w) = tab;
        if zero_row < nx {
            for y in 0..ny { w[zero_row * ny + y] = 0.0; }
        }
        let Some(p) = normalized((nx, ny, w)) else { return Ok(()) };
        let px = p.feature_marginal();
        let c = p.conditionals(Direction::LabelGivenFeature);
        for x in 0..nx {
            prop_assert_eq!(c.row(x).is_some(), px[x] > 0.0);
            if let Some(r) = c.row(x) {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(r.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn density_round_trip(tab in table_strategy(), seed in any::<u64>()) {
        let Some(p) = normalized(tab) else { return Ok(()) };
        let mut r = rng(seed);
        // target supported inside the source support
        let w: Vec<f64> = p.masses().iter().map(|m| if *m > 0.0 && r.gen_bool(0.8) { r.gen_range(0.0..1.0) } else { 0.0 }).collect();
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let q = JointTable::normalized(p.space().clone(), w).unwrap();
        let f = relative_density(&q, &p).unwrap();
        prop_assert!((f.expectation(p.masses()) - 1.0).abs() < 1e-10);
        let back = p.reweight(|x, y| f.at(x, y)).unwrap();
        prop_assert!(back.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_zero_iff_equal(
        base_w in prop::collection::vec(0.01f64..1.0, 2..8),
        seed in any::<u64>(),
        equal in any::<bool>(),
    ) {
        let t: f64 = base_w.iter().sum();
        let base: Vec<f64> = base_w.iter().map(|b| b / t).collect();
        let mut r = rng(seed);
        let a = random_normalized(&mut r, &base, 0.1, 2.0);
        let b = if equal { a.clone() } else { random_normalized(&mut r, &base, 0.1, 2.0) };
        let kl = kl_divergence(
            &RelativeDensity::feature(a.clone()).unwrap(),
            &RelativeDensity::feature(b.clone()).unwrap(),
            &base,
        ).unwrap();
        prop_assert!(kl >= -1e-12);
        if equal {
            prop_assert!(kl.abs() < 1e-10);
        } else if max_abs(&a, &b) > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }
}
