//! Density ratios `λ = dℙ₁/dℙ₀` on finite cell spaces, estimated with a
//! logistic classifier that separates a sample of ℙ₀ from a sample of ℙ₁,
//! and the dependence density `φ` via the product pairing of one joint
//! sample.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{SampleRow, SampleSet};
use crate::error::{Error, Result};

/// Clipping range for predicted probabilities.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2: 1e-6,
            lr: 0.1,
            epochs: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    /// Weight share of the ℙ₁ sample (row share for unit weights).
    pub p_hat: f64,
    pub iterations: usize,
    pub final_loss: f64,
    /// Training-set AUC of the fitted scores.
    pub auc: f64,
}

/// Logistic model `η(c) = σ(b + w_c)` over one-hot cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifierModel {
    pub cells: Vec<String>,
    pub cell_weights: Vec<f64>,
    pub intercept: f64,
    pub training_meta: TrainingMeta,
    /// Aggregated training weight per cell for the ℙ₀ and ℙ₁ samples.
    pub weight0: Vec<f64>,
    pub weight1: Vec<f64>,
}

impl BinaryClassifierModel {
    /// `P(sample 1 | cell)`, clipped into the open unit interval.
    pub fn eta(&self, i: usize) -> f64 {
        sigmoid(self.intercept + self.cell_weights[i]).clamp(PROB_CLIP, 1.0 - PROB_CLIP)
    }

    pub fn predict(&self, cell: &str) -> Option<f64> {
        self.cells.iter().position(|c| c == cell).map(|i| self.eta(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    Ok,
    /// No ℙ₀ mass: the ratio is reported as infinite, not extrapolated.
    AbsentInSample0,
    /// No ℙ₁ mass: the ratio is reported as 0.
    AbsentInSample1,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::AbsentInSample0 => "absent_in_sample0",
            CellFlag::AbsentInSample1 => "absent_in_sample1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimate {
    pub cells: Vec<String>,
    pub values: Vec<f64>,
    pub standard_error: Option<Vec<f64>>,
    pub flags: Vec<CellFlag>,
    pub p_used: f64,
    pub auc: f64,
}

impl RatioEstimate {
    pub fn get(&self, cell: &str) -> Option<f64> {
        self.cells.iter().position(|c| c == cell).map(|i| self.values[i])
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `η = p λ / (p λ + 1 − p)`.
pub fn eta_from_lambda(lambda: f64, p: f64) -> f64 {
    p * lambda / (p * lambda + 1.0 - p)
}

/// `λ = ((1 − p) / p) · η / (1 − η)`.
pub fn lambda_from_eta(eta: f64, p: f64) -> f64 {
    (1.0 - p) / p * eta / (1.0 - eta)
}

/// Sums weights per cell key; cells are numbered by first appearance,
/// scanning `keys0` before `keys1`.
fn aggregate(
    keys0: impl Iterator<Item = (String, f64)>,
    keys1: impl Iterator<Item = (String, f64)>,
) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells = Vec::new();
    let mut w = [Vec::new(), Vec::new()];
    let tagged = keys0.map(|k| (0, k)).chain(keys1.map(|k| (1, k)));
    for (side, (key, weight)) in tagged {
        let i = *index.entry(key.clone()).or_insert_with(|| {
            cells.push(key);
            w[0].push(0.0);
            w[1].push(0.0);
            cells.len() - 1
        });
        w[side][i] += weight;
    }
    let [w0, w1] = w;
    (cells, w0, w1)
}

fn feature_keys(s: &SampleSet) -> impl Iterator<Item = (String, f64)> + '_ {
    s.rows().iter().map(|r| (SampleSet::feature_key(r), r.weight))
}

/// Fits the classifier separating `sample0` (class 0) from `sample1`
/// (class 1) on their feature cells.
pub fn train_classifier(
    sample0: &SampleSet,
    sample1: &SampleSet,
    config: &ClassifierConfig,
) -> Result<BinaryClassifierModel> {
    if sample0.is_empty() || sample1.is_empty() {
        return Err(Error::EmptySample);
    }
    let (cells, w0, w1) = aggregate(feature_keys(sample0), feature_keys(sample1));
    train_from_counts(cells, w0, w1, config)
}

/// Full-batch gradient descent on the L2-penalized mean negative
/// log-likelihood, with each coordinate's step scaled by the inverse of its
/// curvature bound.
pub fn train_from_counts(
    cells: Vec<String>,
    weight0: Vec<f64>,
    weight1: Vec<f64>,
    config: &ClassifierConfig,
) -> Result<BinaryClassifierModel> {
    let total0: f64 = weight0.iter().sum();
    let total1: f64 = weight1.iter().sum();
    if !(total0 > 0.0) || !(total1 > 0.0) {
        return Err(Error::EmptySample);
    }
    let total = total0 + total1;
    let p_hat = total1 / total;
    let n: Vec<f64> = weight0.iter().zip(&weight1).map(|(a, b)| (a + b) / total).collect();
    let n1: Vec<f64> = weight1.iter().map(|b| b / total).collect();

    // σ(1 − σ) ≤ 1/4 bounds the diagonal curvature
    let step_w: Vec<f64> = n.iter().map(|m| config.lr * 4.0 / (m + 4.0 * config.l2)).collect();
    let step_b = config.lr * 4.0;

    let mut b = (p_hat / (1.0 - p_hat)).ln();
    let mut w = vec![0.0; cells.len()];
    let mut grad_w = vec![0.0; cells.len()];
    let mut iterations = 0;
    for epoch in 1..=config.epochs {
        let mut grad_b = 0.0;
        let mut largest = 0.0f64;
        for c in 0..w.len() {
            let s = sigmoid(b + w[c]);
            let r = n[c] * s - n1[c];
            grad_b += r;
            grad_w[c] = r + config.l2 * w[c];
            largest = largest.max(grad_w[c].abs());
        }
        iterations = epoch;
        if largest.max(grad_b.abs()) < 1e-15 {
            break;
        }
        b -= step_b * grad_b;
        for c in 0..w.len() {
            w[c] -= step_w[c] * grad_w[c];
        }
    }
    let final_loss = loss(&n, &n1, b, &w, config.l2);
    let mut model = BinaryClassifierModel {
        cells,
        cell_weights: w,
        intercept: b,
        training_meta: TrainingMeta {
            p_hat,
            iterations,
            final_loss,
            auc: 0.0,
        },
        weight0,
        weight1,
    };
    model.training_meta.auc = auc(&model);
    Ok(model)
}

fn loss(n: &[f64], n1: &[f64], b: f64, w: &[f64], l2: f64) -> f64 {
    let mut l = 0.0;
    for c in 0..w.len() {
        let s = sigmoid(b + w[c]).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        l -= n1[c] * s.ln() + (n[c] - n1[c]) * (1.0 - s).ln();
    }
    l + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Probability that a random ℙ₁ row scores above a random ℙ₀ row, ties
/// counted half.
fn auc(model: &BinaryClassifierModel) -> f64 {
    let mut order: Vec<usize> = (0..model.cells.len()).collect();
    order.sort_by(|&i, &j| model.eta(i).total_cmp(&model.eta(j)));
    let (t0, t1): (f64, f64) = (model.weight0.iter().sum(), model.weight1.iter().sum());
    let mut below0 = 0.0;
    let mut acc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let eta = model.eta(order[k]);
        let (mut g0, mut g1) = (0.0, 0.0);
        while k < order.len() && model.eta(order[k]) == eta {
            g0 += model.weight0[order[k]];
            g1 += model.weight1[order[k]];
            k += 1;
        }
        acc += g1 * (below0 + 0.5 * g0);
        below0 += g0;
    }
    acc / (t0 * t1)
}

/// Converts the classifier's posteriors into `λ` per cell.
pub fn estimate_ratio(model: &BinaryClassifierModel) -> RatioEstimate {
    let p = model.training_meta.p_hat;
    let mut values = Vec::with_capacity(model.cells.len());
    let mut flags = Vec::with_capacity(model.cells.len());
    for i in 0..model.cells.len() {
        let (v, f) = if !(model.weight0[i] > 0.0) {
            (f64::INFINITY, CellFlag::AbsentInSample0)
        } else if !(model.weight1[i] > 0.0) {
            (0.0, CellFlag::AbsentInSample1)
        } else {
            (lambda_from_eta(model.eta(i), p), CellFlag::Ok)
        };
        values.push(v);
        flags.push(f);
    }
    RatioEstimate {
        cells: model.cells.clone(),
        values,
        standard_error: None,
        flags,
        p_used: p,
        auc: model.training_meta.auc,
    }
}

fn resample<R: Rng>(s: &SampleSet, n: usize, rng: &mut R) -> Result<SampleSet> {
    let rows: Vec<SampleRow> = (0..n)
        .map(|_| s.rows()[rng.gen_range(0..s.len())].clone())
        .collect();
    s.with_rows(rows)
}

/// Point estimate plus per-cell bootstrap standard errors. Replicate `i`
/// draws from a generator seeded with `seed + i`.
pub fn bootstrap_ratio(
    sample0: &SampleSet,
    sample1: &SampleSet,
    config: &ClassifierConfig,
    replicates: usize,
    seed: u64,
) -> Result<RatioEstimate> {
    let mut base = estimate_ratio(&train_classifier(sample0, sample1, config)?);
    let reps: Vec<RatioEstimate> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let a = resample(sample0, sample0.len(), &mut rng)?;
            let b = resample(sample1, sample1.len(), &mut rng)?;
            Ok(estimate_ratio(&train_classifier(&a, &b, config)?))
        })
        .collect::<Result<_>>()?;
    let se = base
        .cells
        .iter()
        .map(|cell| {
            let v: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.get(cell))
                .filter(|v| v.is_finite())
                .collect();
            if v.len() < 2 {
                return f64::NAN;
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
        .collect();
    base.standard_error = Some(se);
    Ok(base)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiConfig {
    /// Largest number of product pairs used as the class-0 sample.
    pub max_pairs: usize,
    pub subsample_seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            max_pairs: 1_000_000,
            subsample_seed: 42,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Cell key of a `(feature, label)` pair.
pub fn pair_key(x: &str, y: &str) -> String {
    format!("{x}|{y}")
}

fn joint_parts(joint: &SampleSet) -> Result<Vec<(String, String, f64)>> {
    if joint.is_empty() {
        return Err(Error::EmptySample);
    }
    joint
        .rows()
        .iter()
        .map(|r| {
            let y = r
                .label
                .as_ref()
                .ok_or_else(|| Error::SchemaMismatch("joint sample needs labels".into()))?;
            Ok((SampleSet::feature_key(r), y.to_string(), r.weight))
        })
        .collect()
}

/// Class-0 weights of the product pairing: all `n²` pairs when that is at
/// most `max_pairs`, else `max_pairs` uniform draws with replacement.
fn pairing_weights(parts: &[(String, String, f64)], config: &PhiConfig) -> Vec<(String, f64)> {
    let n = parts.len();
    if n.saturating_mul(n) <= config.max_pairs {
        let mut out = Vec::with_capacity(n * n);
        for (x, _, wx) in parts {
            for (_, y, wy) in parts {
                out.push((pair_key(x, y), wx * wy));
            }
        }
        out
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.subsample_seed);
        (0..config.max_pairs)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                (pair_key(&parts[i].0, &parts[j].1), parts[i].2 * parts[j].2)
            })
            .collect()
    }
}

/// The product pairing as a sample with one categorical column holding the
/// pair key.
pub fn pairing_sample(joint: &SampleSet, config: &PhiConfig) -> Result<SampleSet> {
    let parts = joint_parts(joint)?;
    let pairs = pairing_weights(&parts, config);
    let keys: Vec<String> = pairs.iter().map(|(k, _)| k.clone()).collect();
    let s = SampleSet::from_cells(&keys, None)?;
    let rows = s
        .rows()
        .iter()
        .zip(&pairs)
        .map(|(r, (_, w))| SampleRow {
            weight: *w,
            ..r.clone()
        })
        .collect();
    s.with_rows(rows)
}

/// The joint rows as a sample keyed by pair.
pub fn joint_pair_sample(joint: &SampleSet) -> Result<SampleSet> {
    let parts = joint_parts(joint)?;
    let keys: Vec<String> = parts.iter().map(|(x, y, _)| pair_key(x, y)).collect();
    let s = SampleSet::from_cells(&keys, None)?;
    let rows = s
        .rows()
        .iter()
        .zip(&parts)
        .map(|(r, (_, _, w))| SampleRow {
            weight: *w,
            ..r.clone()
        })
        .collect();
    s.with_rows(rows)
}

/// `φ̂(x, y)` per pair cell `x|y`: class 0 is the product pairing of the
/// sample's features with its labels, class 1 the joint rows themselves.
pub fn estimate_phi(joint: &SampleSet, config: &PhiConfig) -> Result<RatioEstimate> {
    let parts = joint_parts(joint)?;
    let pairs = pairing_weights(&parts, config);
    let (cells, w0, w1) = aggregate(
        pairs.into_iter(),
        parts.iter().map(|(x, y, w)| (pair_key(x, y), *w)),
    );
    Ok(estimate_ratio(&train_from_counts(cells, w0, w1, &config.classifier)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleSide {
    Sample0,
    Sample1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub base: RatioEstimate,
    /// `(factor, max_cell |λ̂_factor − λ̂_base|)`.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
}

/// Retrains after resizing one sample by each factor (drawing with
/// replacement, generator seeded with `seed + index`) and reports how far
/// the ratios move. A factor of exactly 1 reuses the sample unchanged.
pub fn resampling_robustness(
    sample0: &SampleSet,
    sample1: &SampleSet,
    factors: &[f64],
    side: ResampleSide,
    seed: u64,
    config: &ClassifierConfig,
) -> Result<RobustnessReport> {
    if let Some(f) = factors.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidShiftParams(format!("resampling factor {f} must be positive")));
    }
    let base = estimate_ratio(&train_classifier(sample0, sample1, config)?);
    let deviations = factors
        .par_iter()
        .enumerate()
        .map(|(i, &f)| {
            let est = if f == 1.0 {
                base.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let target = match side {
                    ResampleSide::Sample0 => sample0,
                    ResampleSide::Sample1 => sample1,
                };
                let n = ((target.len() as f64 * f).round() as usize).max(1);
                let resized = resample(target, n, &mut rng)?;
                let (a, b) = match side {
                    ResampleSide::Sample0 => (&resized, sample1),
                    ResampleSide::Sample1 => (sample0, &resized),
                };
                estimate_ratio(&train_classifier(a, b, config)?)
            };
            let dev = base
                .cells
                .iter()
                .enumerate()
                .filter(|(k, _)| base.flags[*k] == CellFlag::Ok)
                .filter_map(|(k, c)| {
                    let j = est.cells.iter().position(|e| e == c)?;
                    (est.flags[j] == CellFlag::Ok).then(|| (est.values[j] - base.values[k]).abs())
                })
                .fold(0.0, f64::max);
            Ok((f, dev))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(RobustnessReport {
        base,
        deviations,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(spec: &[(&str, usize)]) -> SampleSet {
        let v: Vec<String> = spec
            .iter()
            .flat_map(|(c, n)| std::iter::repeat_n(c.to_string(), *n))
            .collect();
        SampleSet::from_cells(&v, None).unwrap()
    }

    #[test]
    fn analytic_inversion() {
        assert_eq!(lambda_from_eta(0.75, 0.5), 3.0);
        assert!((lambda_from_eta(0.2, 0.2) - 1.0).abs() < 1e-15);
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for lambda in [0.0, 0.4, 1.0, 2.5] {
                let back = lambda_from_eta(eta_from_lambda(lambda, p), p);
                assert!((back - lambda).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_samples_give_unit_ratio() {
        let a = cells(&[("a", 30), ("b", 50), ("c", 20)]);
        let model = train_classifier(&a, &a, &ClassifierConfig::default()).unwrap();
        assert_eq!(model.training_meta.p_hat, 0.5);
        for i in 0..3 {
            assert!((model.eta(i) - 0.5).abs() < 0.01);
        }
        let r = estimate_ratio(&model);
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!((r.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_counts_are_recovered() {
        // λ = (0.5/0.25, 0.3/0.25, 0.2/0.5)
        let s0 = cells(&[("a", 250), ("b", 250), ("c", 500)]);
        let s1 = cells(&[("a", 100), ("b", 60), ("c", 40)]);
        let r = estimate_ratio(&train_classifier(&s0, &s1, &ClassifierConfig::default()).unwrap());
        for (c, want) in [("a", 2.0), ("b", 1.2), ("c", 0.4)] {
            assert!((r.get(c).unwrap() - want).abs() < 1e-3, "{c}: {}", r.get(c).unwrap());
        }
    }

    #[test]
    fn separated_cells_are_flagged() {
        let s0 = cells(&[("a", 10), ("b", 10)]);
        let s1 = cells(&[("a", 10), ("c", 10)]);
        let model = train_classifier(&s0, &s1, &ClassifierConfig::default()).unwrap();
        let eta_c = model.predict("c").unwrap();
        assert!(eta_c > 0.5 && eta_c < 1.0);
        let r = estimate_ratio(&model);
        let flag = |c: &str| r.flags[r.cells.iter().position(|x| x == c).unwrap()];
        assert_eq!(flag("c"), CellFlag::AbsentInSample0);
        assert_eq!(flag("b"), CellFlag::AbsentInSample1);
        assert_eq!(r.get("c"), Some(f64::INFINITY));
    }

    #[test]
    fn empty_sample() {
        let s = cells(&[("a", 1)]);
        let empty = s.with_rows(vec![]).unwrap();
        assert!(matches!(
            train_classifier(&empty, &s, &ClassifierConfig::default()),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn unit_factor_is_a_no_op() {
        let s0 = cells(&[("a", 40), ("b", 60)]);
        let s1 = cells(&[("a", 70), ("b", 30)]);
        let rep = resampling_robustness(&s0, &s1, &[1.0], ResampleSide::Sample1, 3, &ClassifierConfig::default())
            .unwrap();
        assert_eq!(rep.max_deviation, 0.0);
    }

    #[test]
    fn full_pairing_on_small_sample() {
        let xs: Vec<String> = ["x0", "x0", "x1", "x1"].iter().map(|s| s.to_string()).collect();
        let ys: Vec<String> = ["y0", "y0", "y1", "y1"].iter().map(|s| s.to_string()).collect();
        let joint = SampleSet::from_cells(&xs, Some(&ys)).unwrap();
        let pairs = pairing_sample(&joint, &PhiConfig::default()).unwrap();
        assert_eq!(pairs.len(), 16);
        let phi = estimate_phi(&joint, &PhiConfig::default()).unwrap();
        // P = diag(1/2, 1/2): φ = 2 on the diagonal, 0 off it
        assert!((phi.get("x0|y0").unwrap() - 2.0).abs() < 1e-3);
        assert_eq!(phi.get("x0|y1"), Some(0.0));
    }
}
