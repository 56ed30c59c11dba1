use std::collections::BTreeMap;

use crate::error::{AxisName, Error, Result};
use crate::prob::{marginal_density, relative_density, JointTable, MarginalAxis};

use super::{characterize_fjs, ShiftDiagnosis};

/// Default absolute tolerance for the sufficiency and coarsened label-shift
/// residuals.
pub const GLS_TOL: f64 = 1e-8;

/// A representation `R` given as a partition of the feature cells into
/// blocks, together with the residuals measured for it.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsWitness {
    /// Feature cell → block identifier.
    pub partition: BTreeMap<String, String>,
    /// `max |T(y|x) − T(y|R(x))|` over `T ∈ {P, Q}`; NaN until verified.
    pub sufficiency_residual: f64,
    /// `max |Q_R(b,y) − P_R(b,y)·g(y)|` on the coarsened space; NaN until
    /// verified.
    pub label_shift_residual: f64,
}

impl GlsWitness {
    pub fn new(partition: BTreeMap<String, String>) -> Self {
        Self {
            partition,
            sufficiency_residual: f64::NAN,
            label_shift_residual: f64::NAN,
        }
    }

    /// Each feature cell in its own block.
    pub fn identity(p: &JointTable) -> Self {
        Self::new(
            p.space()
                .feature_cells()
                .iter()
                .map(|c| (c.clone(), c.clone()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlsVerification {
    pub witness: GlsWitness,
    /// Both residuals are below tolerance, so FJS is implied.
    pub implication_applies: bool,
    /// The implication was checked and FJS with `ḡ = g` was confirmed.
    pub implication_holds: bool,
    /// Present when the implication applies.
    pub diagnosis: Option<ShiftDiagnosis>,
    /// `max |f(x,y) − h(x) g(y) / E_P[g(Y) | X = x]|` on the source support.
    pub cogls_residual: Option<f64>,
}

pub fn verify_gls_implies_fjs(
    p: &JointTable,
    q: &JointTable,
    witness: &GlsWitness,
) -> Result<GlsVerification> {
    verify_gls_implies_fjs_with_tol(p, q, witness, GLS_TOL)
}

pub fn verify_gls_implies_fjs_with_tol(
    p: &JointTable,
    q: &JointTable,
    witness: &GlsWitness,
    tol: f64,
) -> Result<GlsVerification> {
    q.ensure_same_space(p)?;
    let (block_of, n_blocks) = block_index(p, witness)?;
    let ny = p.n_labels();

    let p_r = coarsen(p, &block_of, n_blocks);
    let q_r = coarsen(q, &block_of, n_blocks);
    let sufficiency = sufficiency_residual(p, &block_of, &p_r)
        .max(sufficiency_residual(q, &block_of, &q_r));

    let (py, qy) = (p.label_marginal(), q.label_marginal());
    let mut label_shift = 0.0f64;
    for b in 0..n_blocks {
        for y in 0..ny {
            let expected = if py[y] > 0.0 {
                p_r[b * ny + y] * qy[y] / py[y]
            } else {
                0.0
            };
            label_shift = label_shift.max((q_r[b * ny + y] - expected).abs());
        }
    }

    let mut out = GlsVerification {
        witness: GlsWitness {
            partition: witness.partition.clone(),
            sufficiency_residual: sufficiency,
            label_shift_residual: label_shift,
        },
        implication_applies: sufficiency < tol && label_shift < tol,
        implication_holds: false,
        diagnosis: None,
        cogls_residual: None,
    };
    if !out.implication_applies {
        return Ok(out);
    }

    let diagnosis = characterize_fjs(p, q)?;
    let f = relative_density(q, p)?;
    let h = marginal_density(&f, p, MarginalAxis::Feature)?;
    let g = marginal_density(&f, p, MarginalAxis::Label)?;
    let mut cogls = 0.0f64;
    let mut f_max = 0.0f64;
    for x in 0..p.n_features() {
        let Some(row) = p.label_given_feature(x) else {
            continue;
        };
        let eg: f64 = row.iter().zip(g.values()).map(|(r, gv)| r * gv).sum();
        for y in (0..ny).filter(|&y| p.mass(x, y) > 0.0) {
            let fit = if eg > 0.0 { h.get(x) * g.get(y) / eg } else { 0.0 };
            cogls = cogls.max((f.at(x, y) - fit).abs());
            f_max = f_max.max(f.at(x, y));
        }
    }
    out.implication_holds = diagnosis.is_fjs && cogls <= tol.max(1e-8) * (1.0 + f_max);
    out.diagnosis = Some(diagnosis);
    out.cogls_residual = Some(cogls);
    Ok(out)
}

fn block_index(p: &JointTable, witness: &GlsWitness) -> Result<(Vec<usize>, usize)> {
    let space = p.space();
    if let Some(unknown) = witness
        .partition
        .keys()
        .find(|c| space.feature_index(c).is_none())
    {
        return Err(Error::UnknownCell {
            axis: AxisName::Feature,
            cell: unknown.clone(),
        });
    }
    let missing: Vec<String> = space
        .feature_cells()
        .iter()
        .filter(|c| !witness.partition.contains_key(*c))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::PartitionIncomplete { missing });
    }
    let mut ids: Vec<&String> = Vec::new();
    let block_of = space
        .feature_cells()
        .iter()
        .map(|c| {
            let b = &witness.partition[c];
            match ids.iter().position(|id| *id == b) {
                Some(i) => i,
                None => {
                    ids.push(b);
                    ids.len() - 1
                }
            }
        })
        .collect();
    Ok((block_of, ids.len()))
}

/// Joint masses of `(R(X), Y)`, row-major over blocks.
fn coarsen(t: &JointTable, block_of: &[usize], n_blocks: usize) -> Vec<f64> {
    let ny = t.n_labels();
    let mut out = vec![0.0; n_blocks * ny];
    for (x, &b) in block_of.iter().enumerate() {
        for y in 0..ny {
            out[b * ny + y] += t.mass(x, y);
        }
    }
    out
}

fn sufficiency_residual(t: &JointTable, block_of: &[usize], coarse: &[f64]) -> f64 {
    let ny = t.n_labels();
    let mut worst = 0.0f64;
    for (x, &b) in block_of.iter().enumerate() {
        let Some(row) = t.label_given_feature(x) else {
            continue;
        };
        let block = &coarse[b * ny..(b + 1) * ny];
        let mass: f64 = block.iter().sum();
        for y in 0..ny {
            worst = worst.max((row[y] - block[y] / mass).abs());
        }
    }
    worst
}
