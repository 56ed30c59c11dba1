use crate::error::{Error, Result};

use super::CONSTRUCTION_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Rows indexed by feature cell, entries over labels.
    LabelGivenFeature,
    /// Rows indexed by label cell, entries over features.
    FeatureGivenLabel,
}

/// Whether the rows are probability vectors or densities with respect to a
/// source conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalKind {
    Probability,
    Density,
}

/// Row-stochastic table (or table of conditional densities). Rows whose
/// conditioning cell has zero marginal mass are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    direction: Direction,
    kind: ConditionalKind,
    rows: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn new(
        direction: Direction,
        kind: ConditionalKind,
        rows: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        let width = rows.iter().flatten().map(Vec::len).next();
        for row in rows.iter().flatten() {
            if Some(row.len()) != width {
                return Err(Error::InvalidTable("ragged conditional rows".into()));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidTable(
                    "conditional entries must be finite and nonnegative".into(),
                ));
            }
            if kind == ConditionalKind::Probability {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > CONSTRUCTION_TOL {
                    return Err(Error::InvalidTable(format!(
                        "conditional row sums to {s}"
                    )));
                }
            }
        }
        Ok(Self {
            direction,
            kind,
            rows,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn kind(&self) -> ConditionalKind {
        self.kind
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows[i].as_deref()
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.rows[i].is_some()
    }

    pub fn support_mask(&self) -> Vec<bool> {
        self.rows.iter().map(Option::is_some).collect()
    }
}
