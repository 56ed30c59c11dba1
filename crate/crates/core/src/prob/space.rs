use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{AxisName, Error, Result};

/// The finite feature × label grid all tables live on.
///
/// Cell order is the declaration order and is part of the data contract:
/// every matrix in the crate is indexed `(feature_cell, label_cell)` in
/// exactly this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    feature_cells: Vec<String>,
    label_cells: Vec<String>,
    label_values: Option<Vec<f64>>,
}

impl SpaceSpec {
    pub fn new(feature_cells: Vec<String>, label_cells: Vec<String>) -> Result<Self> {
        if feature_cells.is_empty() {
            return Err(Error::InvalidSpace("need at least one feature cell".into()));
        }
        if label_cells.len() < 2 {
            return Err(Error::InvalidSpace("need at least two label cells".into()));
        }
        check_unique(&feature_cells, AxisName::Feature)?;
        check_unique(&label_cells, AxisName::Label)?;
        Ok(Self {
            feature_cells,
            label_cells,
            label_values: None,
        })
    }

    /// Space with cells named `x0, x1, ...` and `y0, y1, ...`.
    pub fn indexed(n_features: usize, n_labels: usize) -> Result<Self> {
        Self::new(
            (0..n_features).map(|i| format!("x{i}")).collect(),
            (0..n_labels).map(|i| format!("y{i}")).collect(),
        )
    }

    /// Attach a numeric value to each label cell (used for regression-style
    /// predictions).
    pub fn with_label_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.label_cells.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} label values", self.label_cells.len()),
                found: values.len().to_string(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpace("label values must be finite".into()));
        }
        self.label_values = Some(values);
        Ok(self)
    }

    pub fn feature_cells(&self) -> &[String] {
        &self.feature_cells
    }

    pub fn label_cells(&self) -> &[String] {
        &self.label_cells
    }

    pub fn label_values(&self) -> Option<&[f64]> {
        self.label_values.as_deref()
    }

    pub fn n_features(&self) -> usize {
        self.feature_cells.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_cells.len()
    }

    pub fn feature_index(&self, cell: &str) -> Option<usize> {
        self.feature_cells.iter().position(|c| c == cell)
    }

    pub fn label_index(&self, cell: &str) -> Option<usize> {
        self.label_cells.iter().position(|c| c == cell)
    }

    pub fn feature_cell(&self, x: usize) -> &str {
        &self.feature_cells[x]
    }

    pub fn label_cell(&self, y: usize) -> &str {
        &self.label_cells[y]
    }

    /// Two spaces are compatible when their cells agree; label values are
    /// annotations and do not take part.
    pub fn same_cells(&self, other: &SpaceSpec) -> bool {
        self.feature_cells == other.feature_cells && self.label_cells == other.label_cells
    }
}

fn check_unique(cells: &[String], axis: AxisName) -> Result<()> {
    let mut seen = HashSet::with_capacity(cells.len());
    for c in cells {
        if !seen.insert(c.as_str()) {
            return Err(Error::InvalidSpace(format!("duplicate {axis} cell {c}")));
        }
    }
    Ok(())
}
