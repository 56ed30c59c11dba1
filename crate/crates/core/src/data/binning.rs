use serde::{Deserialize, Serialize};

use super::sample::{join_key, ColumnType, SampleRow, SampleSet, Value};
use crate::error::{Error, Result};

/// Default number of quantile bins for numeric feature columns.
pub const DEFAULT_QUANTILE_BINS: usize = 10;

/// Name of the label column in a [`BinningSpec`].
pub const LABEL_KEY: &str = "y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum BinStrategy {
    /// Values are used as cells unchanged.
    Categorical,
    Quantile { k: usize },
    Cuts { edges: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnBinning {
    /// Feature column name without the `x_` prefix, or `y` for the label.
    pub column: String,
    #[serde(flatten)]
    pub strategy: BinStrategy,
    /// Cut points after fitting; `None` for categorical columns.
    #[serde(default)]
    pub fitted_edges: Option<Vec<f64>>,
}

/// Per-column discretization. Columns not listed default to quantile bins
/// (numeric features) or passthrough (categorical features and labels).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub columns: Vec<ColumnBinning>,
}

impl BinningSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn get(&self, column: &str) -> Option<&ColumnBinning> {
        self.columns.iter().find(|c| c.column == column)
    }

    pub fn is_fitted(&self) -> bool {
        self.columns
            .iter()
            .all(|c| matches!(c.strategy, BinStrategy::Categorical) || c.fitted_edges.is_some())
    }

    /// Cell key of a row's features: one bin label or raw value per column,
    /// joined by `|`.
    pub fn feature_cell(&self, data: &SampleSet, row: &SampleRow) -> Result<String> {
        let parts = data
            .schema()
            .features
            .iter()
            .zip(&row.features)
            .map(|((name, _), v)| self.cell_of(name, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(join_key(parts.into_iter()))
    }

    pub fn label_cell(&self, row: &SampleRow) -> Result<Option<String>> {
        row.label.as_ref().map(|v| self.cell_of(LABEL_KEY, v)).transpose()
    }

    fn cell_of(&self, column: &str, value: &Value) -> Result<String> {
        match self.get(column).and_then(|c| c.fitted_edges.as_ref()) {
            None => Ok(value.to_string()),
            Some(edges) => {
                let v = value.as_num().ok_or_else(|| {
                    Error::SchemaMismatch(format!("column {column}: '{value}' is not numeric"))
                })?;
                Ok(format!("b{}", bin_index(edges, v)))
            }
        }
    }
}

/// `b0` holds `v ≤ e0`, `b_i` holds `e_{i-1} < v ≤ e_i`, the last bin the
/// rest.
pub fn bin_index(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|e| *e < v)
}

/// Quantile at probability `q` with midpoint interpolation between the two
/// neighbouring order statistics.
pub fn midpoint_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    (sorted[lo] + sorted[hi]) / 2.0
}

/// Fits quantile edges on `data` for every numeric column that needs them.
/// Quantile and cut strategies are ignored for categorical columns of the
/// data.
pub fn fit_bins(data: &SampleSet, spec: &BinningSpec) -> Result<BinningSpec> {
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    let schema = data.schema();
    let mut columns: Vec<(String, ColumnType, Vec<f64>)> = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, (name, t))| {
            let vals = data.rows().iter().filter_map(|r| r.features[j].as_num()).collect();
            (name.clone(), *t, vals)
        })
        .collect();
    if let Some(t) = schema.label {
        let vals = data
            .rows()
            .iter()
            .filter_map(|r| r.label.as_ref().and_then(Value::as_num))
            .collect();
        columns.push((LABEL_KEY.to_string(), t, vals));
    }

    let mut fitted = Vec::new();
    for (name, t, mut vals) in columns {
        let strategy = match (spec.get(&name), t) {
            (Some(c), _) => c.strategy.clone(),
            (None, ColumnType::Numeric) if name != LABEL_KEY => BinStrategy::Quantile {
                k: DEFAULT_QUANTILE_BINS,
            },
            (None, _) => BinStrategy::Categorical,
        };
        let edges = match (&strategy, t) {
            (BinStrategy::Categorical, _) => None,
            (_, ColumnType::Categorical) => {
                return Err(Error::SchemaMismatch(format!(
                    "column {name} is categorical and cannot be binned numerically"
                )))
            }
            (BinStrategy::Cuts { edges }, _) => {
                if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::SchemaMismatch(format!(
                        "column {name}: cut points must be strictly increasing"
                    )));
                }
                Some(edges.clone())
            }
            (BinStrategy::Quantile { k }, _) => {
                if *k < 2 {
                    return Err(Error::SchemaMismatch(format!("column {name}: k must be at least 2")));
                }
                vals.sort_by(f64::total_cmp);
                if vals.first() == vals.last() {
                    return Err(Error::DegenerateColumn { column: name });
                }
                let mut edges: Vec<f64> =
                    (1..*k).map(|i| midpoint_quantile(&vals, i as f64 / *k as f64)).collect();
                let before = edges.len();
                edges.dedup();
                if edges.len() < before {
                    log::warn!(
                        "column {name}: tied quantiles, {} bins instead of {k}",
                        edges.len() + 1
                    );
                }
                Some(edges)
            }
        };
        fitted.push(ColumnBinning {
            column: name,
            strategy,
            fitted_edges: edges,
        });
    }
    Ok(BinningSpec { columns: fitted })
}
