use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{read_joint, write_factors, write_joint};
use super::sample::SampleSet;
use crate::error::{Error, Result};
use crate::prob::{JointTable, RelativeDensity, SpaceSpec};
use crate::shift::{construct_fjs, product_expectation, FjsFactors};

/// Stream of the seeded generator used for the source sample; the target
/// sample uses the next one.
const SOURCE_STREAM: u64 = 0;
const TARGET_STREAM: u64 = 1;

/// Density vectors supplied in a config may be off by this much before
/// they are rejected; within it they are rescaled.
const PARAM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    /// Inline table: `mass[x][y]`.
    Table {
        features: Vec<String>,
        labels: Vec<String>,
        mass: Vec<Vec<f64>>,
    },
    /// Joint table CSV (`x,y,mass`).
    File(PathBuf),
    /// Strictly positive random table.
    Random {
        n_features: usize,
        n_labels: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ShiftSpec {
    None,
    Label { g: Vec<f64> },
    Covariate { h: Vec<f64> },
    /// Factors are rescaled so that `E_P[ħ ḡ] = 1`.
    Fjs { hbar: Vec<f64>, gbar: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub source: SourceSpec,
    pub shift: ShiftSpec,
    pub n_source: usize,
    pub n_target: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub source_sample: SampleSet,
    /// Labeled; the labels are kept apart when written to disk.
    pub target_sample: SampleSet,
    pub p: JointTable,
    pub q: JointTable,
    pub factors: FjsFactors,
}

/// Strictly positive table with entries drawn uniformly from `[0.05, 1)`
/// before normalization.
pub fn random_joint<R: Rng>(space: Arc<SpaceSpec>, rng: &mut R) -> Result<JointTable> {
    let n = space.n_features() * space.n_labels();
    let w = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    JointTable::normalized(space, w)
}

/// Draws `n` cells i.i.d. from `table`.
pub fn sample_cells<R: Rng>(table: &JointTable, n: usize, rng: &mut R) -> Result<(Vec<String>, Vec<String>)> {
    let dist = WeightedIndex::new(table.masses())
        .map_err(|e| Error::InvalidTable(format!("cannot sample: {e}")))?;
    let space = table.space();
    let ny = table.n_labels();
    let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let i = dist.sample(rng);
        xs.push(space.feature_cell(i / ny).to_string());
        ys.push(space.label_cell(i % ny).to_string());
    }
    Ok((xs, ys))
}

fn load_source(spec: &SourceSpec, base_dir: &Path) -> Result<JointTable> {
    match spec {
        SourceSpec::Table {
            features,
            labels,
            mass,
        } => {
            let space = Arc::new(SpaceSpec::new(features.clone(), labels.clone())?);
            JointTable::from_rows(space, mass)
        }
        SourceSpec::File(path) => read_joint(&base_dir.join(path)),
        SourceSpec::Random {
            n_features,
            n_labels,
            seed,
        } => {
            let space = Arc::new(SpaceSpec::indexed(*n_features, *n_labels)?);
            random_joint(space, &mut ChaCha8Rng::seed_from_u64(*seed))
        }
    }
}

fn checked_density(values: &[f64], base: &[f64], name: &str) -> Result<RelativeDensity> {
    if values.len() != base.len() {
        return Err(Error::InvalidShiftParams(format!(
            "{name} has {} values, expected {}",
            values.len(),
            base.len()
        )));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidShiftParams(format!("{name} must be nonnegative")));
    }
    let e: f64 = values.iter().zip(base).map(|(a, b)| a * b).sum();
    if (e - 1.0).abs() > PARAM_TOL {
        return Err(Error::InvalidShiftParams(format!(
            "{name} has expectation {e} under the source, expected 1"
        )));
    }
    RelativeDensity::feature(values.iter().map(|v| v / e).collect())
}

fn shift_factors(p: &JointTable, shift: &ShiftSpec) -> Result<FjsFactors> {
    let (px, py) = p.marginals();
    match shift {
        ShiftSpec::None => FjsFactors::label(RelativeDensity::label(vec![1.0; py.len()])?, p),
        ShiftSpec::Label { g } => {
            let g = checked_density(g, &py, "g")?.into_values();
            FjsFactors::label(RelativeDensity::label(g)?, p)
        }
        ShiftSpec::Covariate { h } => {
            let h = checked_density(h, &px, "h")?;
            FjsFactors::covariate(h, p)
        }
        ShiftSpec::Fjs { hbar, gbar } => {
            if hbar.len() != px.len() || gbar.len() != py.len() {
                return Err(Error::InvalidShiftParams("factor lengths do not match the source".into()));
            }
            if hbar.iter().chain(gbar).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidShiftParams("factors must be nonnegative".into()));
            }
            let e = product_expectation(p, hbar, gbar);
            if !(e > 0.0) {
                return Err(Error::InvalidShiftParams("factors vanish on the source support".into()));
            }
            FjsFactors::new(
                RelativeDensity::feature(hbar.iter().map(|v| v / e).collect())?,
                RelativeDensity::label(gbar.clone())?,
                p,
            )
        }
    }
}

/// Draws the source and target samples. Relative `File` paths resolve
/// against `base_dir`.
pub fn simulate(config: &SimulationConfig, base_dir: &Path) -> Result<Simulation> {
    if config.n_source == 0 || config.n_target == 0 {
        return Err(Error::InvalidShiftParams("sample counts must be at least 1".into()));
    }
    let p = load_source(&config.source, base_dir)?;
    let factors = shift_factors(&p, &config.shift)?;
    let q = construct_fjs(&p, &factors)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SOURCE_STREAM);
    let (sx, sy) = sample_cells(&p, config.n_source, &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(TARGET_STREAM);
    let (tx, ty) = sample_cells(&q, config.n_target, &mut rng)?;

    Ok(Simulation {
        source_sample: SampleSet::from_cells(&sx, Some(&sy))?,
        target_sample: SampleSet::from_cells(&tx, Some(&ty))?,
        p,
        q,
        factors,
    })
}

/// Writes `source.csv`, `target.csv` (features only),
/// `target.labels.csv`, `P.csv`, `Q.csv` and `factors.csv` into `dir`.
pub fn write_simulation(dir: &Path, sim: &Simulation, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let s = Some(seed);
    sim.source_sample.write_csv(&dir.join("source.csv"), s)?;
    sim.target_sample.unlabeled().write_csv(&dir.join("target.csv"), s)?;
    sim.target_sample.write_labels_csv(&dir.join("target.labels.csv"), s)?;
    write_joint(&dir.join("P.csv"), &sim.p, s)?;
    write_joint(&dir.join("Q.csv"), &sim.q, s)?;
    write_factors(&dir.join("factors.csv"), sim.p.space(), &sim.factors, s)?;
    Ok(())
}
