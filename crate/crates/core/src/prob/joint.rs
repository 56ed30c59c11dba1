use std::sync::Arc;

use crate::error::{Error, Result};

use super::conditional::{ConditionalKind, ConditionalTable, Direction};
use super::space::SpaceSpec;
use super::{CONSTRUCTION_TOL, IDENTITY_TOL};

/// Probability mass table over the feature × label grid, stored row-major
/// (`mass[x * n_labels + y]`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    space: Arc<SpaceSpec>,
    mass: Vec<f64>,
}

impl JointTable {
    /// Validating constructor: entries finite, nonnegative, total 1 within
    /// `1e-12`.
    pub fn new(space: Arc<SpaceSpec>, mass: Vec<f64>) -> Result<Self> {
        check_shape(&space, mass.len())?;
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidTable(format!("invalid mass {bad}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::InvalidTable(format!("masses sum to {total}")));
        }
        Ok(Self { space, mass })
    }

    pub fn from_rows(space: Arc<SpaceSpec>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != space.n_features() || rows.iter().any(|r| r.len() != space.n_labels()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", space.n_features(), space.n_labels()),
                found: format!(
                    "{}x{}",
                    rows.len(),
                    rows.first().map(Vec::len).unwrap_or(0)
                ),
            });
        }
        Self::new(space, rows.concat())
    }

    /// Builds a table from nonnegative weights whose total must lie within
    /// `tol` of 1; the weights are then rescaled to total exactly 1 up to
    /// rounding.
    pub fn from_weights(space: Arc<SpaceSpec>, weights: Vec<f64>, tol: f64) -> Result<Self> {
        check_shape(&space, weights.len())?;
        if let Some(bad) = weights.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidTable(format!("invalid weight {bad}")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || (total - 1.0).abs() > tol {
            return Err(Error::NotNormalized { expectation: total });
        }
        let mass = weights.into_iter().map(|w| w / total).collect();
        Self::new(space, mass)
    }

    /// Normalizes arbitrary nonnegative weights with a positive total.
    pub fn normalized(space: Arc<SpaceSpec>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidTable(format!("weights sum to {total}")));
        }
        Self::from_weights(space, weights.into_iter().map(|w| w / total).collect(), 1e-9)
    }

    pub fn space(&self) -> &Arc<SpaceSpec> {
        &self.space
    }

    pub fn n_features(&self) -> usize {
        self.space.n_features()
    }

    pub fn n_labels(&self) -> usize {
        self.space.n_labels()
    }

    pub fn mass(&self, x: usize, y: usize) -> f64 {
        self.mass[x * self.n_labels() + y]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let d = self.n_labels();
        &self.mass[x * d..(x + 1) * d]
    }

    pub fn feature_marginal(&self) -> Vec<f64> {
        (0..self.n_features())
            .map(|x| self.row(x).iter().sum())
            .collect()
    }

    pub fn label_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_labels()];
        for x in 0..self.n_features() {
            for (acc, m) in out.iter_mut().zip(self.row(x)) {
                *acc += m;
            }
        }
        out
    }

    /// `(P_X, P_Y)`.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        (self.feature_marginal(), self.label_marginal())
    }

    /// Conditional distribution in the requested direction; rows with zero
    /// conditioning mass come back undefined.
    pub fn conditionals(&self, direction: Direction) -> ConditionalTable {
        let (nx, ny) = (self.n_features(), self.n_labels());
        let rows = match direction {
            Direction::LabelGivenFeature => (0..nx)
                .map(|x| {
                    let row = self.row(x);
                    let m: f64 = row.iter().sum();
                    (m > 0.0).then(|| row.iter().map(|v| v / m).collect())
                })
                .collect(),
            Direction::FeatureGivenLabel => {
                let py = self.label_marginal();
                (0..ny)
                    .map(|y| {
                        (py[y] > 0.0)
                            .then(|| (0..nx).map(|x| self.mass(x, y) / py[y]).collect())
                    })
                    .collect()
            }
        };
        ConditionalTable::new(direction, ConditionalKind::Probability, rows)
            .expect("conditional rows of a valid table are stochastic")
    }

    /// `P(Y = · | X = x)`, or `None` when `P_X(x) = 0`.
    pub fn label_given_feature(&self, x: usize) -> Option<Vec<f64>> {
        let row = self.row(x);
        let m: f64 = row.iter().sum();
        (m > 0.0).then(|| row.iter().map(|v| v / m).collect())
    }

    /// Multiplies every cell by `weight(x, y)`. The result must already be
    /// normalized to within `1e-10`; it is rescaled to remove rounding.
    pub fn reweight(&self, weight: impl Fn(usize, usize) -> f64) -> Result<JointTable> {
        let ny = self.n_labels();
        let weights = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, m)| m * weight(i / ny, i % ny))
            .collect();
        Self::from_weights(self.space.clone(), weights, IDENTITY_TOL)
    }

    pub fn ensure_same_space(&self, other: &JointTable) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space.same_cells(&other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    /// Largest cellwise absolute difference.
    pub fn max_abs_diff(&self, other: &JointTable) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_shape(space: &SpaceSpec, len: usize) -> Result<()> {
    let expected = space.n_features() * space.n_labels();
    if len != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("{expected} cells"),
            found: len.to_string(),
        });
    }
    Ok(())
}
