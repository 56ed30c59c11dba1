use std::cmp::Ordering;
use std::sync::Arc;

use super::binning::BinningSpec;
use super::sample::SampleSet;
use crate::error::{AxisName, Error, Result};
use crate::prob::{JointTable, SpaceSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Histogram {
    /// Labeled data.
    Joint(JointTable),
    /// Unlabeled data: feature marginal in the order of the space's cells.
    Features(Vec<f64>),
}

/// Feature and label cells occurring in `data` after binning.
pub fn observed_cells(data: &SampleSet, bins: &BinningSpec) -> Result<(Vec<String>, Vec<String>)> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in data.rows() {
        xs.push(bins.feature_cell(data, row)?);
        if let Some(y) = bins.label_cell(row)? {
            ys.push(y);
        }
    }
    for v in [&mut xs, &mut ys] {
        v.sort_by(|a, b| natural_cmp(a, b));
        v.dedup();
    }
    Ok((xs, ys))
}

/// Space spanned by the cells observed in labeled `data`, in natural order.
pub fn infer_space(data: &SampleSet, bins: &BinningSpec) -> Result<SpaceSpec> {
    if !data.is_labeled() {
        return Err(Error::SchemaMismatch("a space needs labeled data".into()));
    }
    let (xs, ys) = observed_cells(data, bins)?;
    SpaceSpec::new(xs, ys)
}

/// Normalized weighted counts over `space`.
pub fn histogram(data: &SampleSet, bins: &BinningSpec, space: &Arc<SpaceSpec>) -> Result<Histogram> {
    let total = data.total_weight();
    if data.is_empty() || !(total > 0.0) {
        return Err(Error::EmptySample);
    }
    let ny = space.n_labels();
    let labeled = data.is_labeled();
    let mut counts = vec![0.0; if labeled { space.n_features() * ny } else { space.n_features() }];
    for row in data.rows() {
        let xc = bins.feature_cell(data, row)?;
        let x = space.feature_index(&xc).ok_or_else(|| {
            Error::SchemaMismatch(format!("{} cell '{xc}' is not in the space", AxisName::Feature))
        })?;
        match bins.label_cell(row)? {
            Some(yc) => {
                let y = space.label_index(&yc).ok_or_else(|| {
                    Error::SchemaMismatch(format!("{} cell '{yc}' is not in the space", AxisName::Label))
                })?;
                counts[x * ny + y] += row.weight;
            }
            None => counts[x] += row.weight,
        }
    }
    for c in counts.iter_mut() {
        *c /= total;
    }
    if labeled {
        Ok(Histogram::Joint(JointTable::normalized(space.clone(), counts)?))
    } else {
        Ok(Histogram::Features(counts))
    }
}

/// Orders strings with embedded numbers numerically: `x2 < x10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut ai, mut bi) = (a.char_indices().peekable(), b.char_indices().peekable());
    loop {
        match (ai.peek().copied(), bi.peek().copied()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((i, ca)), Some((j, cb))) => {
                if ca.is_ascii_digit() && cb.is_ascii_digit() {
                    let ea = digits_end(a, i);
                    let eb = digits_end(b, j);
                    let (na, nb) = (a[i..ea].trim_start_matches('0'), b[j..eb].trim_start_matches('0'));
                    let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                    while ai.peek().is_some_and(|(k, _)| *k < ea) {
                        ai.next();
                    }
                    while bi.peek().is_some_and(|(k, _)| *k < eb) {
                        bi.next();
                    }
                } else {
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    ai.next();
                    bi.next();
                }
            }
        }
    }
}

fn digits_end(s: &str, start: usize) -> usize {
    s[start..]
        .find(|c: char| !c.is_ascii_digit())
        .map_or(s.len(), |k| start + k)
}
