//! Constructing, recognizing and decomposing covariate shift, label shift
//! and factorizable joint shift (FJS) between a source table `P` and a
//! target table `Q`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::prob::{JointTable, RelativeDensity, IDENTITY_TOL};

mod characterize;
mod gls;
mod posterior;

pub use characterize::{characterize_fjs, MINOR_REL_TOL};
pub use gls::{verify_gls_implies_fjs, verify_gls_implies_fjs_with_tol, GlsVerification, GlsWitness, GLS_TOL};
pub use posterior::{
    conditional_densities, correct_posterior, feature_density_from_parts, predict_target_mean,
};

/// Factors `(ħ, ḡ)` with `ħ(X)·ḡ(Y)` a density of `Q` with respect to `P`.
///
/// Only defined up to `(c·ħ, ḡ/c)`; the constructor pins nothing but the
/// product normalization `E_P[ħ ḡ] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FjsFactors {
    hbar: RelativeDensity,
    gbar: RelativeDensity,
}

impl FjsFactors {
    pub fn new(hbar: RelativeDensity, gbar: RelativeDensity, source: &JointTable) -> Result<Self> {
        hbar.ensure_len(source.n_features())?;
        gbar.ensure_len(source.n_labels())?;
        let e = product_expectation(source, hbar.values(), gbar.values());
        if (e - 1.0).abs() > IDENTITY_TOL {
            return Err(Error::NotNormalized { expectation: e });
        }
        Ok(Self { hbar, gbar })
    }

    /// Covariate shift as FJS: `(h, 1)`.
    pub fn covariate(h: RelativeDensity, source: &JointTable) -> Result<Self> {
        let ones = RelativeDensity::ones(crate::prob::DensityAxis::Label, source.n_labels());
        Self::new(h, ones, source)
    }

    /// Label shift as FJS: `(1, g)`.
    pub fn label(g: RelativeDensity, source: &JointTable) -> Result<Self> {
        let ones = RelativeDensity::ones(crate::prob::DensityAxis::Feature, source.n_features());
        Self::new(ones, g, source)
    }

    pub fn hbar(&self) -> &RelativeDensity {
        &self.hbar
    }

    pub fn gbar(&self) -> &RelativeDensity {
        &self.gbar
    }

    /// `(c·ħ, ḡ/c)`, which describes the same target.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Ok(Self {
            hbar: self.hbar.scaled(c)?,
            gbar: self.gbar.scaled(1.0 / c)?,
        })
    }

    pub(crate) fn from_parts_unchecked(hbar: RelativeDensity, gbar: RelativeDensity) -> Self {
        Self { hbar, gbar }
    }
}

pub(crate) fn product_expectation(p: &JointTable, hbar: &[f64], gbar: &[f64]) -> f64 {
    let mut e = 0.0;
    for (x, hx) in hbar.iter().enumerate() {
        for (y, gy) in gbar.iter().enumerate() {
            e += p.mass(x, y) * hx * gy;
        }
    }
    e
}

/// Outcome of [`characterize_fjs`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDiagnosis {
    pub is_covariate: bool,
    pub is_label: bool,
    pub is_fjs: bool,
    /// Whether the positive part of `dQ/dP` forms one connected block.
    /// When it does not, each block's factor scale is fixed separately.
    pub support_connected: bool,
    pub fjs_factors: Option<FjsFactors>,
    /// `ψ = ḡ / g`, normalized so that ψ is 1 on the last label with
    /// positive target mass. Set to 1 where `g = 0`.
    pub psi: Option<RelativeDensity>,
    pub residuals: BTreeMap<String, f64>,
}

/// `Q = P · g(Y)`.
pub fn construct_label_shift(p: &JointTable, g: &RelativeDensity) -> Result<JointTable> {
    g.ensure_normalized(&p.label_marginal())?;
    let g = g.values();
    p.reweight(|_, y| g[y])
}

/// `Q = P · h(X)`.
pub fn construct_covariate_shift(p: &JointTable, h: &RelativeDensity) -> Result<JointTable> {
    h.ensure_normalized(&p.feature_marginal())?;
    let h = h.values();
    p.reweight(|x, _| h[x])
}

/// `Q = P · ħ(X) · ḡ(Y)`.
pub fn construct_fjs(p: &JointTable, factors: &FjsFactors) -> Result<JointTable> {
    let (h, g) = (factors.hbar.values(), factors.gbar.values());
    if h.len() != p.n_features() || g.len() != p.n_labels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}+{} factor values", p.n_features(), p.n_labels()),
            found: format!("{}+{}", h.len(), g.len()),
        });
    }
    p.reweight(|x, y| h[x] * g[y])
}

/// Splits an FJS into a label shift `P → Q_L` followed by a covariate shift
/// `Q_L → Q_C`, with `Q_C` equal to the FJS target.
pub fn decompose_fjs(p: &JointTable, factors: &FjsFactors) -> Result<(JointTable, JointTable)> {
    let (h, g) = (factors.hbar.values(), factors.gbar.values());
    let eg: f64 = p.label_marginal().iter().zip(g).map(|(m, v)| m * v).sum();
    if !(eg > 0.0) {
        return Err(Error::DegenerateFactor);
    }
    let q_l = p.reweight(|_, y| g[y] / eg)?;
    let eh: f64 = q_l.feature_marginal().iter().zip(h).map(|(m, v)| m * v).sum();
    if !(eh > 0.0) {
        return Err(Error::DegenerateFactor);
    }
    let q_c = q_l.reweight(|x, _| h[x] / eh)?;
    Ok((q_l, q_c))
}
