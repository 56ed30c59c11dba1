#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftkit::data::random_joint;
use shiftkit::prob::{JointTable, RelativeDensity, SpaceSpec};
use shiftkit::shift::FjsFactors;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(nx: usize, ny: usize) -> Arc<SpaceSpec> {
    Arc::new(SpaceSpec::indexed(nx, ny).unwrap())
}

/// The 2×2 source used throughout: rows x0 = (0.3, 0.2), x1 = (0.1, 0.4).
pub fn worked() -> JointTable {
    JointTable::from_rows(space(2, 2), &[vec![0.3, 0.2], vec![0.1, 0.4]]).unwrap()
}

pub fn table(rows: &[Vec<f64>]) -> JointTable {
    JointTable::from_rows(space(rows.len(), rows[0].len()), rows).unwrap()
}

/// Strictly positive table with random shape up to `max_x × max_y`.
pub fn random_table(rng: &mut ChaCha8Rng, max_x: usize, max_y: usize) -> JointTable {
    let nx = rng.gen_range(1..=max_x);
    let ny = rng.gen_range(2..=max_y);
    random_joint(space(nx, ny), rng).unwrap()
}

/// Positive values in `[lo, hi)` rescaled to expectation 1 under `base`.
pub fn random_normalized(rng: &mut ChaCha8Rng, base: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let v: Vec<f64> = base.iter().map(|_| rng.gen_range(lo..hi)).collect();
    let e: f64 = v.iter().zip(base).map(|(a, b)| a * b).sum();
    v.into_iter().map(|a| a / e).collect()
}

pub fn random_factors(rng: &mut ChaCha8Rng, p: &JointTable) -> FjsFactors {
    let hbar: Vec<f64> = (0..p.n_features()).map(|_| rng.gen_range(0.2..3.0)).collect();
    let gbar: Vec<f64> = (0..p.n_labels()).map(|_| rng.gen_range(0.2..3.0)).collect();
    let mut e = 0.0;
    for x in 0..p.n_features() {
        for y in 0..p.n_labels() {
            e += p.mass(x, y) * hbar[x] * gbar[y];
        }
    }
    FjsFactors::new(
        RelativeDensity::feature(hbar.iter().map(|v| v / e).collect()).unwrap(),
        RelativeDensity::label(gbar).unwrap(),
        p,
    )
    .unwrap()
}

/// Direct cellwise density `Q/P` computed without the library.
pub fn ratio_table(p: &JointTable, q: &JointTable) -> Vec<Vec<f64>> {
    (0..p.n_features())
        .map(|x| (0..p.n_labels()).map(|y| q.mass(x, y) / p.mass(x, y)).collect())
        .collect()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `Q(y | x)` read straight off the table.
pub fn posterior_row(q: &JointTable, x: usize) -> Vec<f64> {
    let s: f64 = q.row(x).iter().sum();
    q.row(x).iter().map(|m| m / s).collect()
}

pub struct GlsInstance {
    pub p: JointTable,
    pub q: JointTable,
    pub witness: shiftkit::shift::GlsWitness,
    /// True label density `dQ_Y/dP_Y`.
    pub g: Vec<f64>,
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|a| a / s).collect()
}

/// Source with `P(y | x)` constant on random blocks of 2 or 3 feature cells.
/// The target applies a label shift on `(R, Y)`; with `reweight_blocks` the
/// feature law inside each block is also replaced, otherwise it is lifted
/// with `P(x | R, Y)`.
pub fn random_gls(rng: &mut ChaCha8Rng, reweight_blocks: bool) -> GlsInstance {
    let n_blocks = rng.gen_range(1..=4);
    let sizes: Vec<usize> = (0..n_blocks).map(|_| rng.gen_range(2..=3)).collect();
    let block_of: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, s)| std::iter::repeat_n(b, *s)).collect();
    let nx = block_of.len();
    let ny = rng.gen_range(2..=5);
    let px = random_simplex(rng, nx);
    let pi: Vec<Vec<f64>> = (0..n_blocks).map(|_| random_simplex(rng, ny)).collect();
    let mass: Vec<f64> = (0..nx).flat_map(|x| (0..ny).map(|y| px[x] * pi[block_of[x]][y]).collect::<Vec<_>>()).collect();
    let p = JointTable::normalized(space(nx, ny), mass).unwrap();
    let g = random_normalized(rng, &p.label_marginal(), 0.2, 3.0);

    let q_mass: Vec<f64> = if reweight_blocks {
        let mut pr = vec![0.0; n_blocks];
        for x in 0..nx {
            pr[block_of[x]] += px[x];
        }
        let mut w: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.05..1.0)).collect();
        for b in 0..n_blocks {
            let s: f64 = (0..nx).filter(|&x| block_of[x] == b).map(|x| w[x]).sum();
            for x in (0..nx).filter(|&x| block_of[x] == b) {
                w[x] /= s;
            }
        }
        (0..nx)
            .flat_map(|x| {
                let b = block_of[x];
                (0..ny).map(|y| w[x] * pr[b] * pi[b][y] * g[y]).collect::<Vec<_>>()
            })
            .collect()
    } else {
        (0..nx).flat_map(|x| (0..ny).map(|y| p.mass(x, y) * g[y]).collect::<Vec<_>>()).collect()
    };
    let q = JointTable::normalized(p.space().clone(), q_mass).unwrap();
    let partition = (0..nx).map(|x| (format!("x{x}"), format!("b{}", block_of[x]))).collect();
    GlsInstance {
        p,
        q,
        witness: shiftkit::shift::GlsWitness::new(partition),
        g,
    }
}

/// Negative control: an unstructured source under the same kind of
/// partition, so `P(y | x)` varies inside blocks.
pub fn random_gls_violation(rng: &mut ChaCha8Rng) -> GlsInstance {
    let mut inst = random_gls(rng, false);
    let p = random_joint(inst.p.space().clone(), rng).unwrap();
    inst.g = random_normalized(rng, &p.label_marginal(), 0.2, 3.0);
    let g = inst.g.clone();
    inst.q = p.reweight(|_, y| g[y]).unwrap();
    inst.p = p;
    inst
}

/// Well-separated conditional columns: `n_x ≥ 2 n_y` and skewed entries
/// (cubed uniforms plus 1e-3), so the label mixture is identifiable and EM
/// converges within its default iteration budget.
pub fn random_em_table(rng: &mut ChaCha8Rng) -> JointTable {
    let ny = rng.gen_range(2..=10);
    let nx = rng.gen_range(2 * ny..=20);
    let w = (0..nx * ny).map(|_| rng.gen_range(0.0f64..1.0).powi(3) + 1e-3).collect();
    JointTable::normalized(space(nx, ny), w).unwrap()
}
