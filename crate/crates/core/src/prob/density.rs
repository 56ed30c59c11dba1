//! Relative densities (Radon–Nikodym ratios on finite spaces) and the
//! operations that move between joint, marginal and conditional views.

use crate::error::{AxisName, Error, Result};

use super::joint::JointTable;
use super::IDENTITY_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityAxis {
    Feature,
    Label,
    Joint,
}

/// Nonnegative ratio of a target measure to a base measure, one value per
/// cell. Joint densities are stored row-major over `(feature, label)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDensity {
    axis: DensityAxis,
    values: Vec<f64>,
    n_labels: usize,
    base_id: String,
}

impl RelativeDensity {
    fn checked(axis: DensityAxis, values: Vec<f64>, n_labels: usize, base_id: &str) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("entry {bad} is not a nonnegative number")));
        }
        Ok(Self {
            axis,
            values,
            n_labels,
            base_id: base_id.to_string(),
        })
    }

    /// Density over feature cells with respect to `P_X`.
    pub fn feature(values: Vec<f64>) -> Result<Self> {
        Self::checked(DensityAxis::Feature, values, 1, "P_X")
    }

    /// Density over label cells with respect to `P_Y`.
    pub fn label(values: Vec<f64>) -> Result<Self> {
        Self::checked(DensityAxis::Label, values, 1, "P_Y")
    }

    /// Joint density with respect to `P`, row-major.
    pub fn joint(values: Vec<f64>, n_labels: usize) -> Result<Self> {
        if n_labels == 0 || !values.len().is_multiple_of(n_labels) {
            return Err(Error::ShapeMismatch {
                expected: format!("multiple of {n_labels}"),
                found: values.len().to_string(),
            });
        }
        Self::checked(DensityAxis::Joint, values, n_labels, "P")
    }

    pub fn ones(axis: DensityAxis, n: usize) -> Self {
        let base_id = match axis {
            DensityAxis::Feature => "P_X",
            DensityAxis::Label => "P_Y",
            DensityAxis::Joint => "P",
        };
        Self {
            axis,
            values: vec![1.0; n],
            n_labels: 1,
            base_id: base_id.into(),
        }
    }

    pub fn with_base_id(mut self, id: impl Into<String>) -> Self {
        self.base_id = id.into();
        self
    }

    pub fn axis(&self) -> DensityAxis {
        self.axis
    }

    pub fn base_id(&self) -> &str {
        &self.base_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Joint entry at `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        debug_assert_eq!(self.axis, DensityAxis::Joint);
        self.values[x * self.n_labels + y]
    }

    /// `Σ_i base(i) · values(i)`.
    pub fn expectation(&self, base: &[f64]) -> f64 {
        self.values.iter().zip(base).map(|(v, b)| v * b).sum()
    }

    pub fn ensure_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} density values"),
                found: self.values.len().to_string(),
            });
        }
        Ok(())
    }

    /// Errors unless the expectation under `base` is 1 within `1e-10`.
    pub fn ensure_normalized(&self, base: &[f64]) -> Result<()> {
        self.ensure_len(base.len())?;
        let e = self.expectation(base);
        if (e - 1.0).abs() > IDENTITY_TOL {
            return Err(Error::NotNormalized { expectation: e });
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::checked(
            self.axis,
            self.values.iter().map(|v| v * c).collect(),
            self.n_labels,
            &self.base_id,
        )
    }
}

/// `f = dQ/dP`, cellwise `Q/P` on the source support and 0 off it.
pub fn relative_density(target: &JointTable, source: &JointTable) -> Result<RelativeDensity> {
    target.ensure_same_space(source)?;
    let space = source.space();
    let ny = source.n_labels();
    let mut offending = Vec::new();
    let values = source
        .masses()
        .iter()
        .zip(target.masses())
        .enumerate()
        .map(|(i, (&p, &q))| {
            if p > 0.0 {
                q / p
            } else {
                if q > 0.0 {
                    offending.push((
                        space.feature_cell(i / ny).to_string(),
                        space.label_cell(i % ny).to_string(),
                    ));
                }
                0.0
            }
        })
        .collect();
    if !offending.is_empty() {
        return Err(Error::AbsoluteContinuityViolation { cells: offending });
    }
    RelativeDensity::joint(values, ny)
}

/// Which marginal a joint density is projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalAxis {
    Feature,
    Label,
}

impl From<MarginalAxis> for AxisName {
    fn from(a: MarginalAxis) -> Self {
        match a {
            MarginalAxis::Feature => AxisName::Feature,
            MarginalAxis::Label => AxisName::Label,
        }
    }
}

fn ensure_joint(f: &RelativeDensity, source: &JointTable) -> Result<()> {
    if f.axis() != DensityAxis::Joint {
        return Err(Error::InvalidDensity("expected a joint density".into()));
    }
    f.ensure_len(source.masses().len())
}

/// Projects a joint density onto one axis: `h(x) = E_P[f | X = x]` or
/// `g(y) = E_P[f | Y = y]`. Cells with zero source marginal get 0.
pub fn marginal_density(
    f: &RelativeDensity,
    source: &JointTable,
    axis: MarginalAxis,
) -> Result<RelativeDensity> {
    ensure_joint(f, source)?;
    let (nx, ny) = (source.n_features(), source.n_labels());
    match axis {
        MarginalAxis::Feature => {
            let values = (0..nx)
                .map(|x| {
                    let px: f64 = source.row(x).iter().sum();
                    if px > 0.0 {
                        (0..ny).map(|y| f.at(x, y) * source.mass(x, y)).sum::<f64>() / px
                    } else {
                        0.0
                    }
                })
                .collect();
            RelativeDensity::feature(values)
        }
        MarginalAxis::Label => {
            let py = source.label_marginal();
            let values = (0..ny)
                .map(|y| {
                    if py[y] > 0.0 {
                        (0..nx).map(|x| f.at(x, y) * source.mass(x, y)).sum::<f64>() / py[y]
                    } else {
                        0.0
                    }
                })
                .collect();
            RelativeDensity::label(values)
        }
    }
}

/// `E_Q[T | axis = cell]` via the quotient `E_P[T f | cell] / E_P[f | cell]`.
/// `t` is a real table in the same row-major layout as the joint masses.
pub fn reweighted_conditional_expectation(
    t: &[f64],
    f: &RelativeDensity,
    source: &JointTable,
    condition_axis: MarginalAxis,
    cell: usize,
) -> Result<f64> {
    ensure_joint(f, source)?;
    if t.len() != source.masses().len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} table entries", source.masses().len()),
            found: t.len().to_string(),
        });
    }
    let ny = source.n_labels();
    let cells: Vec<usize> = match condition_axis {
        MarginalAxis::Feature => (0..ny).map(|y| cell * ny + y).collect(),
        MarginalAxis::Label => (0..source.n_features()).map(|x| x * ny + cell).collect(),
    };
    let base: f64 = cells.iter().map(|&i| source.masses()[i]).sum();
    let weighted: f64 = cells.iter().map(|&i| source.masses()[i] * f.get(i)).sum();
    let cell_name = match condition_axis {
        MarginalAxis::Feature => source.space().feature_cell(cell),
        MarginalAxis::Label => source.space().label_cell(cell),
    };
    if !(base > 0.0) || !(weighted > 0.0) {
        return Err(Error::ZeroTargetMarginal {
            axis: condition_axis.into(),
            cell: cell_name.to_string(),
        });
    }
    // numerator and the marginal density share the factor 1/base
    let num: f64 = cells
        .iter()
        .map(|&i| t[i] * f.get(i) * source.masses()[i])
        .sum();
    Ok(num / weighted)
}

/// `KL_base(λ0 ∥ λ1) = Σ base·λ0·ln(λ0/λ1)` with `0·ln(0/c) = 0`.
pub fn kl_divergence(
    lambda0: &RelativeDensity,
    lambda1: &RelativeDensity,
    base: &[f64],
) -> Result<f64> {
    lambda0.ensure_normalized(base)?;
    lambda1.ensure_normalized(base)?;
    kl_values(lambda0.values(), lambda1.values(), base)
}

pub(crate) fn kl_values(lambda0: &[f64], lambda1: &[f64], base: &[f64]) -> Result<f64> {
    let mut kl = 0.0;
    for (i, ((&a, &b), &w)) in lambda0.iter().zip(lambda1).zip(base).enumerate() {
        let m = w * a;
        if m > 0.0 {
            if !(b > 0.0) {
                return Err(Error::SupportMismatch { cell: i.to_string() });
            }
            kl += m * (a / b).ln();
        }
    }
    Ok(kl)
}

/// `φ = dP / d(P_X ⊗ P_Y)`, i.e. `P(x,y) / (P_X(x) P_Y(y))`.
pub fn dependence_density(source: &JointTable) -> Result<RelativeDensity> {
    let (px, py) = source.marginals();
    if let Some(x) = px.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::ZeroMarginal {
            axis: AxisName::Feature,
            cell: source.space().feature_cell(x).to_string(),
        });
    }
    if let Some(y) = py.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::ZeroMarginal {
            axis: AxisName::Label,
            cell: source.space().label_cell(y).to_string(),
        });
    }
    let ny = source.n_labels();
    let values = source
        .masses()
        .iter()
        .enumerate()
        .map(|(i, p)| p / (px[i / ny] * py[i % ny]))
        .collect();
    Ok(RelativeDensity::joint(values, ny)?.with_base_id("P_X*P_Y"))
}
