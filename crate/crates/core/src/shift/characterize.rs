use std::collections::{BTreeMap, VecDeque};

use crate::error::Result;
use crate::prob::{marginal_density, relative_density, JointTable, MarginalAxis, RelativeDensity};

use super::{FjsFactors, ShiftDiagnosis};

/// Relative tolerance for the covariate, label and 2×2-minor tests.
pub const MINOR_REL_TOL: f64 = 1e-8;

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Classifies the shift from `P` to `Q` and, when it is an FJS, recovers
/// the factors.
///
/// Residuals reported (all ≥ 0):
/// - `covariate`, `label`: largest relative spread of `f = dQ/dP` along a
///   supported row (resp. column);
/// - `minor`: largest relative defect `|f00 f11 − f01 f10| / max(..)` over
///   2×2 minors with all four cells in the source support;
/// - `factorization`: largest relative gap between `f` and `ħ ḡ` on the
///   support (only when factors could be built);
/// - `conditions_h`, `conditions_g`: absolute violations of
///   `h = ħ·E_P[ḡ | X]` and `g = ḡ·E_P[ħ | Y]`.
pub fn characterize_fjs(p: &JointTable, q: &JointTable) -> Result<ShiftDiagnosis> {
    let f = relative_density(q, p)?;
    let (nx, ny) = (p.n_features(), p.n_labels());
    let supp = |x: usize, y: usize| p.mass(x, y) > 0.0;

    let mut covariate = 0.0f64;
    for x in 0..nx {
        if let Some(anchor) = argmax_by(0..ny, |y| supp(x, y), |y| p.mass(x, y)) {
            for y in (0..ny).filter(|&y| supp(x, y)) {
                covariate = covariate.max(rel_diff(f.at(x, y), f.at(x, anchor)));
            }
        }
    }
    let mut label = 0.0f64;
    for y in 0..ny {
        if let Some(anchor) = argmax_by(0..nx, |x| supp(x, y), |x| p.mass(x, y)) {
            for x in (0..nx).filter(|&x| supp(x, y)) {
                label = label.max(rel_diff(f.at(x, y), f.at(anchor, y)));
            }
        }
    }
    let minor = max_minor_defect(p, &f);

    let blocks = factor_blocks(p, &f);
    let g = marginal_density(&f, p, MarginalAxis::Label)?;
    let h = marginal_density(&f, p, MarginalAxis::Feature)?;
    let (hbar, gbar) = normalize_blocks(&blocks, g.values());

    let mut factorization = 0.0f64;
    for x in 0..nx {
        for y in (0..ny).filter(|&y| supp(x, y)) {
            factorization = factorization.max(rel_diff(f.at(x, y), hbar[x] * gbar[y]));
        }
    }

    let is_covariate = covariate <= MINOR_REL_TOL;
    let is_label = label <= MINOR_REL_TOL;
    let rank_one = minor <= MINOR_REL_TOL && factorization <= MINOR_REL_TOL;
    let is_fjs = rank_one || is_covariate || is_label;

    let mut residuals = BTreeMap::new();
    residuals.insert("covariate".to_string(), covariate);
    residuals.insert("label".to_string(), label);
    residuals.insert("minor".to_string(), minor);
    residuals.insert("factorization".to_string(), factorization);

    let (fjs_factors, psi) = if is_fjs {
        let psi: Vec<f64> = gbar
            .iter()
            .zip(g.values())
            .map(|(gb, gv)| if *gv > 0.0 { gb / gv } else { 1.0 })
            .collect();
        let (res_h, res_g) = condition_residuals(p, h.values(), g.values(), &hbar, &gbar);
        residuals.insert("conditions_h".to_string(), res_h);
        residuals.insert("conditions_g".to_string(), res_g);
        let factors = FjsFactors::from_parts_unchecked(
            RelativeDensity::feature(hbar)?,
            RelativeDensity::label(gbar)?,
        );
        (Some(factors), Some(RelativeDensity::label(psi)?))
    } else {
        (None, None)
    };

    Ok(ShiftDiagnosis {
        is_covariate,
        is_label,
        is_fjs,
        support_connected: blocks.count <= 1,
        fjs_factors,
        psi,
        residuals,
    })
}

fn argmax_by(
    range: std::ops::Range<usize>,
    keep: impl Fn(usize) -> bool,
    key: impl Fn(usize) -> f64,
) -> Option<usize> {
    range
        .filter(|&i| keep(i))
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if key(b) >= key(i) => Some(b),
            _ => Some(i),
        })
}

fn max_minor_defect(p: &JointTable, f: &RelativeDensity) -> f64 {
    let (nx, ny) = (p.n_features(), p.n_labels());
    let mut worst = 0.0f64;
    for x0 in 0..nx {
        for x1 in x0 + 1..nx {
            for y0 in 0..ny {
                if p.mass(x0, y0) <= 0.0 || p.mass(x1, y0) <= 0.0 {
                    continue;
                }
                for y1 in y0 + 1..ny {
                    if p.mass(x0, y1) <= 0.0 || p.mass(x1, y1) <= 0.0 {
                        continue;
                    }
                    let d = rel_diff(f.at(x0, y0) * f.at(x1, y1), f.at(x0, y1) * f.at(x1, y0));
                    worst = worst.max(d);
                }
            }
        }
    }
    worst
}

/// Rank-one candidate `f ≈ a(x) b(y)` built block by block over the
/// bipartite graph of positive entries of `f` on the support.
struct Blocks {
    a: Vec<f64>,
    b: Vec<f64>,
    /// Block id per label column (None for columns without positive entries).
    col_block: Vec<Option<usize>>,
    row_block: Vec<Option<usize>>,
    count: usize,
}

fn factor_blocks(p: &JointTable, f: &RelativeDensity) -> Blocks {
    let (nx, ny) = (p.n_features(), p.n_labels());
    let positive = |x: usize, y: usize| p.mass(x, y) > 0.0 && f.at(x, y) > 0.0;
    let px = p.feature_marginal();

    let mut a = vec![0.0; nx];
    let mut b = vec![0.0; ny];
    let mut row_block = vec![None; nx];
    let mut col_block = vec![None; ny];
    let mut count = 0;

    // anchor each block at its heaviest remaining row
    let mut order: Vec<usize> = (0..nx).collect();
    order.sort_by(|&i, &j| px[j].total_cmp(&px[i]).then(i.cmp(&j)));

    for &anchor in &order {
        if row_block[anchor].is_some() || !(0..ny).any(|y| positive(anchor, y)) {
            continue;
        }
        let id = count;
        count += 1;
        a[anchor] = 1.0;
        row_block[anchor] = Some(id);
        let mut queue = VecDeque::from([(true, anchor)]);
        while let Some((is_row, i)) = queue.pop_front() {
            if is_row {
                for y in 0..ny {
                    if col_block[y].is_none() && positive(i, y) {
                        b[y] = f.at(i, y) / a[i];
                        col_block[y] = Some(id);
                        queue.push_back((false, y));
                    }
                }
            } else {
                for x in 0..nx {
                    if row_block[x].is_none() && positive(x, i) {
                        a[x] = f.at(x, i) / b[i];
                        row_block[x] = Some(id);
                        queue.push_back((true, x));
                    }
                }
            }
        }
    }
    Blocks {
        a,
        b,
        col_block,
        row_block,
        count,
    }
}

/// Fixes each block's scale so that `ḡ = g` (ψ = 1) on the block's last
/// label column.
fn normalize_blocks(blocks: &Blocks, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut hbar = blocks.a.clone();
    let mut gbar = blocks.b.clone();
    for id in 0..blocks.count {
        let Some(last) = (0..gbar.len()).rev().find(|&y| blocks.col_block[y] == Some(id)) else {
            continue;
        };
        let c = g[last] / blocks.b[last];
        for y in (0..gbar.len()).filter(|&y| blocks.col_block[y] == Some(id)) {
            gbar[y] *= c;
        }
        for x in (0..hbar.len()).filter(|&x| blocks.row_block[x] == Some(id)) {
            hbar[x] /= c;
        }
    }
    (hbar, gbar)
}

fn condition_residuals(
    p: &JointTable,
    h: &[f64],
    g: &[f64],
    hbar: &[f64],
    gbar: &[f64],
) -> (f64, f64) {
    let (px, py) = p.marginals();
    let mut res_h = 0.0f64;
    for x in (0..p.n_features()).filter(|&x| px[x] > 0.0) {
        let e: f64 = (0..p.n_labels()).map(|y| gbar[y] * p.mass(x, y)).sum::<f64>() / px[x];
        res_h = res_h.max((h[x] - hbar[x] * e).abs());
    }
    let mut res_g = 0.0f64;
    for y in (0..p.n_labels()).filter(|&y| py[y] > 0.0) {
        let e: f64 = (0..p.n_features()).map(|x| hbar[x] * p.mass(x, y)).sum::<f64>() / py[y];
        res_g = res_g.max((g[y] - gbar[y] * e).abs());
    }
    (res_h, res_g)
}
