use crate::error::{AxisName, Error, Result};
use crate::prob::{
    marginal_density, relative_density, ConditionalKind, ConditionalTable, Direction, JointTable,
    MarginalAxis, RelativeDensity,
};

/// Conditional densities `(q_{Y|X}, q_{X|Y})` of `Q` with respect to the
/// matching conditionals of `P`. A row is undefined when its source marginal
/// or its marginal density vanishes.
pub fn conditional_densities(
    p: &JointTable,
    q: &JointTable,
) -> Result<(ConditionalTable, ConditionalTable)> {
    let f = relative_density(q, p)?;
    let h = marginal_density(&f, p, MarginalAxis::Feature)?;
    let g = marginal_density(&f, p, MarginalAxis::Label)?;
    let (nx, ny) = (p.n_features(), p.n_labels());

    let y_given_x = (0..nx)
        .map(|x| (h.get(x) > 0.0).then(|| (0..ny).map(|y| f.at(x, y) / h.get(x)).collect()))
        .collect();
    let x_given_y = (0..ny)
        .map(|y| (g.get(y) > 0.0).then(|| (0..nx).map(|x| f.at(x, y) / g.get(y)).collect()))
        .collect();
    Ok((
        ConditionalTable::new(Direction::LabelGivenFeature, ConditionalKind::Density, y_given_x)?,
        ConditionalTable::new(Direction::FeatureGivenLabel, ConditionalKind::Density, x_given_y)?,
    ))
}

fn source_row(p: &JointTable, x: usize) -> Result<Vec<f64>> {
    if x >= p.n_features() {
        return Err(Error::UnknownCell {
            axis: AxisName::Feature,
            cell: x.to_string(),
        });
    }
    p.label_given_feature(x).ok_or_else(|| Error::UndefinedConditional {
        cell: p.space().feature_cell(x).to_string(),
    })
}

/// Target posterior at feature cell `x`:
/// `ψ(y) g(y) P(y|x) / Σ_z ψ(z) g(z) P(z|x)`.
pub fn correct_posterior(
    p: &JointTable,
    g: &RelativeDensity,
    psi: &RelativeDensity,
    x: usize,
) -> Result<Vec<f64>> {
    g.ensure_len(p.n_labels())?;
    psi.ensure_len(p.n_labels())?;
    let row = source_row(p, x)?;
    let weighted: Vec<f64> = row
        .iter()
        .zip(g.values().iter().zip(psi.values()))
        .map(|(r, (gv, sv))| sv * gv * r)
        .collect();
    let total: f64 = weighted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroDenominator {
            axis: AxisName::Feature,
            cell: p.space().feature_cell(x).to_string(),
        });
    }
    Ok(weighted.into_iter().map(|w| w / total).collect())
}

/// `E_Q[value(Y) | X = x]` for a target reached through FJS with label
/// factor `ḡ`.
pub fn predict_target_mean(p: &JointTable, gbar: &RelativeDensity, x: usize) -> Result<f64> {
    let values = p.space().label_values().ok_or(Error::NoLabelValues)?;
    let ones = RelativeDensity::ones(crate::prob::DensityAxis::Label, p.n_labels());
    let post = correct_posterior(p, gbar, &ones, x)?;
    Ok(post.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// `h(x) = Σ_y q_{X|Y=y}(x) g(y) P(y|x)`. Undefined rows of `q_{X|Y}`
/// contribute nothing; features with `P_X(x) = 0` get 0.
pub fn feature_density_from_parts(
    p: &JointTable,
    qxy: &ConditionalTable,
    g: &RelativeDensity,
) -> Result<RelativeDensity> {
    g.ensure_len(p.n_labels())?;
    if qxy.direction() != Direction::FeatureGivenLabel || qxy.n_rows() != p.n_labels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows of q_X|Y", p.n_labels()),
            found: qxy.n_rows().to_string(),
        });
    }
    let values = (0..p.n_features())
        .map(|x| match p.label_given_feature(x) {
            None => 0.0,
            Some(row) => (0..p.n_labels())
                .filter_map(|y| qxy.row(y).map(|q| q[x] * g.get(y) * row[y]))
                .sum(),
        })
        .collect();
    RelativeDensity::feature(values)
}
