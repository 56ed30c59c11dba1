use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column name prefix marking a feature column in dataset CSVs.
pub const FEATURE_PREFIX: &str = "x_";
pub const LABEL_COLUMN: &str = "y";
pub const WEIGHT_COLUMN: &str = "w";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Cat(String),
    Num(f64),
}

impl Value {
    /// Numeric when the text parses as a finite float.
    pub fn parse(text: &str) -> Self {
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Value::Num(v),
            _ => Value::Cat(text.trim().to_string()),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Cat(s) => f.write_str(s),
            Value::Num(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    /// Feature column names without the `x_` prefix.
    pub features: Vec<(String, ColumnType)>,
    pub label: Option<ColumnType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub features: Vec<Value>,
    pub label: Option<Value>,
    pub weight: f64,
}

/// Weighted observations, labeled or not.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    schema: Schema,
    rows: Vec<SampleRow>,
}

impl SampleSet {
    pub fn new(schema: Schema, rows: Vec<SampleRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.features.len() != schema.features.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {i} has {} feature values, schema has {}",
                    r.features.len(),
                    schema.features.len()
                )));
            }
            if r.label.is_some() != schema.label.is_some() {
                return Err(Error::SchemaMismatch(format!("row {i} label presence differs from schema")));
            }
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return Err(Error::SchemaMismatch(format!("row {i} has weight {}", r.weight)));
            }
        }
        Ok(Self { schema, rows })
    }

    /// One categorical feature column `x_cell`, optionally labeled, unit
    /// weights.
    pub fn from_cells(features: &[String], labels: Option<&[String]>) -> Result<Self> {
        if let Some(l) = labels {
            if l.len() != features.len() {
                return Err(Error::SchemaMismatch("features and labels differ in length".into()));
            }
        }
        let schema = Schema {
            features: vec![("cell".into(), ColumnType::Categorical)],
            label: labels.map(|_| ColumnType::Categorical),
        };
        let rows = features
            .iter()
            .enumerate()
            .map(|(i, x)| SampleRow {
                features: vec![Value::Cat(x.clone())],
                label: labels.map(|l| Value::Cat(l[i].clone())),
                weight: 1.0,
            })
            .collect();
        Self::new(schema, rows)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[SampleRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.schema.label.is_some()
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// Same schema, different rows.
    pub fn with_rows(&self, rows: Vec<SampleRow>) -> Result<Self> {
        Self::new(self.schema.clone(), rows)
    }

    /// Drops the labels.
    pub fn unlabeled(&self) -> Self {
        Self {
            schema: Schema {
                features: self.schema.features.clone(),
                label: None,
            },
            rows: self
                .rows
                .iter()
                .map(|r| SampleRow {
                    features: r.features.clone(),
                    label: None,
                    weight: r.weight,
                })
                .collect(),
        }
    }

    /// Raw feature key: the feature values joined by `|`.
    pub fn feature_key(row: &SampleRow) -> String {
        join_key(row.features.iter().map(|v| v.to_string()))
    }

    /// Reads a dataset CSV: `x_*` feature columns, optional `y`, optional
    /// `w`. Lines starting with `#` are ignored.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = super::io::reader(path)?;
        let headers = rdr.headers()?.clone();
        let mut feature_idx = Vec::new();
        let (mut label_idx, mut weight_idx) = (None, None);
        for (i, h) in headers.iter().enumerate() {
            if let Some(name) = h.strip_prefix(FEATURE_PREFIX) {
                feature_idx.push((i, name.to_string()));
            } else if h == LABEL_COLUMN {
                label_idx = Some(i);
            } else if h == WEIGHT_COLUMN {
                weight_idx = Some(i);
            } else {
                return Err(Error::SchemaMismatch(format!(
                    "{}: unexpected column '{h}'",
                    path.display()
                )));
            }
        }
        if feature_idx.is_empty() {
            return Err(Error::SchemaMismatch(format!("{}: no x_ feature columns", path.display())));
        }
        let mut raw_features: Vec<Vec<String>> = Vec::new();
        let mut raw_labels: Vec<String> = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            weights.push(match weight_idx {
                Some(i) => rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("weight '{}': {e}", &rec[i])))?,
                None => 1.0,
            });
            raw_features.push(feature_idx.iter().map(|(i, _)| rec[*i].trim().to_string()).collect());
            if let Some(i) = label_idx {
                raw_labels.push(rec[i].trim().to_string());
            }
        }
        let features: Vec<(String, ColumnType)> = feature_idx
            .iter()
            .enumerate()
            .map(|(j, (_, name))| (name.clone(), column_type(raw_features.iter().map(|r| r[j].as_str()))))
            .collect();
        let label = label_idx.map(|_| column_type(raw_labels.iter().map(String::as_str)));
        let rows = raw_features
            .into_iter()
            .enumerate()
            .map(|(i, r)| SampleRow {
                features: r
                    .into_iter()
                    .zip(&features)
                    .map(|(text, (_, t))| typed(text, *t))
                    .collect(),
                label: label.map(|t| typed(raw_labels[i].clone(), t)),
                weight: weights[i],
            })
            .collect();
        Self::new(Schema { features, label }, rows)
    }

    /// Writes the dataset CSV, leading with the provenance comment.
    pub fn write_csv(&self, path: &Path, seed: Option<u64>) -> Result<()> {
        let mut header: Vec<String> = self
            .schema
            .features
            .iter()
            .map(|(n, _)| format!("{FEATURE_PREFIX}{n}"))
            .collect();
        if self.is_labeled() {
            header.push(LABEL_COLUMN.into());
        }
        let weighted = self.rows.iter().any(|r| r.weight != 1.0);
        if weighted {
            header.push(WEIGHT_COLUMN.into());
        }
        let mut w = super::io::writer(path, seed)?;
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &r.label {
                rec.push(l.to_string());
            }
            if weighted {
                rec.push(super::io::fmt_f64(r.weight));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes only the labels, one per row, as `y`.
    pub fn write_labels_csv(&self, path: &Path, seed: Option<u64>) -> Result<()> {
        let mut w = super::io::writer(path, seed)?;
        w.write_record([LABEL_COLUMN])?;
        for r in &self.rows {
            let l = r.label.as_ref().ok_or_else(|| Error::SchemaMismatch("sample has no labels".into()))?;
            w.write_record([l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn join_key(parts: impl Iterator<Item = String>) -> String {
    parts.collect::<Vec<_>>().join("|")
}

/// Numeric when every entry parses as a finite float.
fn column_type<'a>(mut values: impl Iterator<Item = &'a str>) -> ColumnType {
    let mut any = false;
    let all_num = values.all(|v| {
        any = true;
        matches!(Value::parse(v), Value::Num(_))
    });
    if any && all_num {
        ColumnType::Numeric
    } else {
        ColumnType::Categorical
    }
}

fn typed(text: String, t: ColumnType) -> Value {
    match t {
        ColumnType::Numeric => Value::parse(&text),
        ColumnType::Categorical => Value::Cat(text),
    }
}
