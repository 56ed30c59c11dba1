//! Fixed-point solver for the label factor ratio `ψ = ḡ / g` of a
//! factorizable joint shift whose two target marginal densities `h` and `g`
//! are both known.

use crate::error::{AxisName, Error, Result};
use crate::prob::{JointTable, RelativeDensity};
use crate::shift::{construct_fjs, FjsFactors};

#[derive(Debug, Clone, PartialEq)]
pub struct PsiConfig {
    /// Max-norm step change below which the iteration may stop.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting ψ; all ones when absent.
    pub init: Option<Vec<f64>>,
    /// Relaxation weight α in `ψ ← (1 − α) ψ + α · update`.
    pub damping: f64,
    /// Floor for α when oscillation halves it.
    pub min_damping: f64,
}

impl Default for PsiConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            init: None,
            damping: 1.0,
            min_damping: 0.1,
        }
    }
}

/// Number of consecutive sign-alternating steps that triggers a damping cut.
const OSCILLATION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PsiTrace {
    /// Normalized ψ iterates, starting with the initial value.
    pub iterates: Vec<Vec<f64>>,
    /// Equation residual of each iterate.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    /// Relaxation weight in force at the end.
    pub final_damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution {
    pub psi: RelativeDensity,
    pub factors: FjsFactors,
    pub trace: PsiTrace,
}

/// Precomputed pieces shared by every iteration.
struct Problem {
    ny: usize,
    h: Vec<f64>,
    g: Vec<f64>,
    /// `P(y | x)`, only for features with `P_X > 0`.
    pyx: Vec<Option<Vec<f64>>>,
    /// `P(x | y)` stored row-major over `(x, y)`.
    pxy: Vec<f64>,
    phi: Vec<f64>,
    qx: Vec<f64>,
    qy: Vec<f64>,
    /// Features that carry target mass.
    active: Vec<usize>,
    label_supp: Vec<bool>,
    /// Label whose ψ is pinned to 1.
    anchor: usize,
    names: Vec<String>,
    label_names: Vec<String>,
}

impl Problem {
    fn new(p: &JointTable, h: &RelativeDensity, g: &RelativeDensity) -> Result<Self> {
        let (nx, ny) = (p.n_features(), p.n_labels());
        h.ensure_normalized(&p.feature_marginal())?;
        g.ensure_normalized(&p.label_marginal())?;
        let (px, py) = p.marginals();
        let space = p.space();
        for x in 0..nx {
            if px[x] <= 0.0 && h.get(x) > 0.0 {
                return Err(Error::InfeasibleMarginals {
                    axis: AxisName::Feature,
                    cell: space.feature_cell(x).to_string(),
                });
            }
        }
        for y in 0..ny {
            if py[y] <= 0.0 && g.get(y) > 0.0 {
                return Err(Error::InfeasibleMarginals {
                    axis: AxisName::Label,
                    cell: space.label_cell(y).to_string(),
                });
            }
            if py[y] > 0.0 && !(g.get(y) > 0.0) {
                return Err(Error::NotPositive {
                    what: "target label density",
                    axis: AxisName::Label,
                    cell: space.label_cell(y).to_string(),
                });
            }
        }
        let mut phi = vec![0.0; nx * ny];
        let mut pxy = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                if px[x] > 0.0 && py[y] > 0.0 {
                    phi[x * ny + y] = p.mass(x, y) / (px[x] * py[y]);
                }
                if py[y] > 0.0 {
                    pxy[x * ny + y] = p.mass(x, y) / py[y];
                }
            }
        }
        let label_supp: Vec<bool> = py.iter().map(|m| *m > 0.0).collect();
        let anchor = (0..ny)
            .rev()
            .find(|&y| label_supp[y])
            .expect("a normalized table has a supported label");
        Ok(Self {
            ny,
            h: h.values().to_vec(),
            g: g.values().to_vec(),
            pyx: (0..nx).map(|x| p.label_given_feature(x)).collect(),
            pxy,
            phi,
            qx: px.iter().zip(h.values()).map(|(a, b)| a * b).collect(),
            qy: py.iter().zip(g.values()).map(|(a, b)| a * b).collect(),
            active: (0..nx).filter(|&x| px[x] > 0.0 && h.get(x) > 0.0).collect(),
            label_supp,
            anchor,
            names: space.feature_cells().to_vec(),
            label_names: space.label_cells().to_vec(),
        })
    }

    fn zero_denominator(&self, x: usize) -> Error {
        Error::ZeroDenominator {
            axis: AxisName::Feature,
            cell: self.names[x].clone(),
        }
    }

    /// `Σ_z ψ(z) g(z) P(z | x)` for every active feature.
    fn denominators(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let mut den = vec![0.0; self.h.len()];
        for &x in &self.active {
            let row = self.pyx[x].as_ref().expect("active features have mass");
            let d: f64 = (0..self.ny).map(|z| psi[z] * self.g[z] * row[z]).sum();
            if !(d > 0.0) {
                return Err(self.zero_denominator(x));
            }
            den[x] = d;
        }
        Ok(den)
    }

    /// `Σ_x P(x|y) h(x) / Σ_z ψ(z) g(z) P(z|x)` per label.
    fn column_sums(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let den = self.denominators(psi)?;
        let mut s = vec![0.0; self.ny];
        for &x in &self.active {
            let w = self.h[x] / den[x];
            for (y, acc) in s.iter_mut().enumerate() {
                *acc += self.pxy[x * self.ny + y] * w;
            }
        }
        Ok(s)
    }

    fn step_conditional(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let s = self.column_sums(psi)?;
        self.invert(s)
    }

    fn step_phi(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let ny = self.ny;
        let mut s = vec![0.0; ny];
        for &x in &self.active {
            let d: f64 = (0..ny)
                .map(|z| psi[z] * self.phi[x * ny + z] * self.qy[z])
                .sum();
            if !(d > 0.0) {
                return Err(self.zero_denominator(x));
            }
            for (y, acc) in s.iter_mut().enumerate() {
                *acc += self.phi[x * ny + y] * self.qx[x] / d;
            }
        }
        self.invert(s)
    }

    fn invert(&self, s: Vec<f64>) -> Result<Vec<f64>> {
        s.into_iter()
            .enumerate()
            .map(|(y, v)| {
                if !self.label_supp[y] {
                    Ok(1.0)
                } else if v > 0.0 {
                    Ok(1.0 / v)
                } else {
                    Err(Error::InfeasibleMarginals {
                        axis: AxisName::Label,
                        cell: self.label_names[y].clone(),
                    })
                }
            })
            .collect()
    }

    fn normalize(&self, psi: &mut [f64]) {
        let a = psi[self.anchor];
        for (y, v) in psi.iter_mut().enumerate() {
            *v = if self.label_supp[y] { *v / a } else { 1.0 };
        }
    }

    fn residual(&self, psi: &[f64]) -> Result<f64> {
        let s = self.column_sums(psi)?;
        Ok((0..self.ny)
            .filter(|&y| self.label_supp[y])
            .map(|y| (1.0 - psi[y] * s[y]).abs())
            .fold(0.0, f64::max))
    }

    fn factors(&self, psi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let den = self.denominators(psi)?;
        let hbar = (0..self.h.len())
            .map(|x| if den[x] > 0.0 { self.h[x] / den[x] } else { 0.0 })
            .collect();
        let gbar = psi.iter().zip(&self.g).map(|(s, g)| s * g).collect();
        Ok((hbar, gbar))
    }
}

/// `max_y |1 − ψ(y) Σ_x P(x|y) h(x) / Σ_z ψ(z) g(z) P(z|x)|` over labels
/// with source mass.
pub fn residual_psi(
    p: &JointTable,
    h: &RelativeDensity,
    g: &RelativeDensity,
    psi: &RelativeDensity,
) -> Result<f64> {
    psi.ensure_len(p.n_labels())?;
    Problem::new(p, h, g)?.residual(psi.values())
}

/// One unnormalized update computed from `φ = dP/d(P_X ⊗ P_Y)` and the
/// target marginals `Q_X = h P_X`, `Q_Y = g P_Y`.
pub fn psi_update_phi(
    p: &JointTable,
    h: &RelativeDensity,
    g: &RelativeDensity,
    psi: &[f64],
) -> Result<Vec<f64>> {
    Problem::new(p, h, g)?.step_phi(psi)
}

/// The same update computed from the source conditionals.
pub fn psi_update_conditional(
    p: &JointTable,
    h: &RelativeDensity,
    g: &RelativeDensity,
    psi: &[f64],
) -> Result<Vec<f64>> {
    Problem::new(p, h, g)?.step_conditional(psi)
}

/// Finds FJS factors whose target has feature density `h` and label density
/// `g` with respect to `P`.
pub fn solve_psi(
    p: &JointTable,
    h: &RelativeDensity,
    g: &RelativeDensity,
    config: &PsiConfig,
) -> Result<PsiSolution> {
    let prob = Problem::new(p, h, g)?;
    let ny = p.n_labels();
    let mut psi = match &config.init {
        Some(init) => {
            if init.len() != ny {
                return Err(Error::ShapeMismatch {
                    expected: format!("{ny} psi values"),
                    found: init.len().to_string(),
                });
            }
            if init.iter().zip(&prob.label_supp).any(|(v, s)| *s && !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidDensity("initial psi must be positive".into()));
            }
            init.clone()
        }
        None => vec![1.0; ny],
    };
    prob.normalize(&mut psi);

    let mut alpha = config.damping.clamp(config.min_damping, 1.0);
    let mut trace = PsiTrace {
        residuals: vec![prob.residual(&psi)?],
        iterates: vec![psi.clone()],
        converged: false,
        iterations_used: 0,
        final_damping: alpha,
    };
    let mut prev_delta: Option<Vec<f64>> = None;
    let mut alternating = 0usize;

    for it in 1..=config.max_iter {
        let mut next = prob.step_phi(&psi)?;
        prob.normalize(&mut next);
        if alpha < 1.0 {
            for (n, o) in next.iter_mut().zip(&psi) {
                *n = (1.0 - alpha) * o + alpha * *n;
            }
        }
        let delta: Vec<f64> = next.iter().zip(&psi).map(|(a, b)| a - b).collect();
        let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));

        if let Some(prev) = &prev_delta {
            let dot: f64 = prev.iter().zip(&delta).map(|(a, b)| a * b).sum();
            alternating = if dot < 0.0 { alternating + 1 } else { 0 };
            if alternating >= OSCILLATION_WINDOW && alpha > config.min_damping {
                alpha = (alpha / 2.0).max(config.min_damping);
                alternating = 0;
                log::debug!("psi iteration oscillates at step {it}; damping set to {alpha}");
            }
        }
        prev_delta = Some(delta);

        psi = next;
        let residual = prob.residual(&psi)?;
        trace.iterates.push(psi.clone());
        trace.residuals.push(residual);
        trace.iterations_used = it;
        trace.final_damping = alpha;

        if step < config.tol && residual < 10.0 * config.tol {
            let (hbar, gbar) = prob.factors(&psi)?;
            if marginal_error(p, &prob, &hbar, &gbar)? < 10.0 * config.tol {
                trace.converged = true;
                let factors = FjsFactors::new(
                    RelativeDensity::feature(hbar)?,
                    RelativeDensity::label(gbar)?,
                    p,
                )?;
                return Ok(PsiSolution {
                    psi: RelativeDensity::label(psi)?,
                    factors,
                    trace,
                });
            }
        }
    }
    Err(Error::PsiNotConverged(Box::new(trace)))
}

/// Largest deviation of the constructed target's marginal densities from
/// `(h, g)`.
fn marginal_error(p: &JointTable, prob: &Problem, hbar: &[f64], gbar: &[f64]) -> Result<f64> {
    let factors = FjsFactors::from_parts_unchecked(
        RelativeDensity::feature(hbar.to_vec())?,
        RelativeDensity::label(gbar.to_vec())?,
    );
    let q = match construct_fjs(p, &factors) {
        Ok(q) => q,
        Err(Error::NotNormalized { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let (px, py) = p.marginals();
    let (qx, qy) = q.marginals();
    let fx = (0..px.len())
        .filter(|&x| px[x] > 0.0)
        .map(|x| (qx[x] / px[x] - prob.h[x]).abs());
    let fy = (0..py.len())
        .filter(|&y| py[y] > 0.0)
        .map(|y| (qy[y] / py[y] - prob.g[y]).abs());
    Ok(fx.chain(fy).fold(0.0, f64::max))
}
