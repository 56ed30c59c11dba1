//! Generalized EM estimation of the target label density `g` from the source
//! table and the target feature density `h` alone.

use crate::error::{AxisName, Error, Result};
use crate::prob::{kl_values, JointTable, RelativeDensity};

/// Iterates whose label density drops below this are floored to it.
pub const G_FLOOR: f64 = 1e-300;

/// Largest `residual_em` accepted by [`exact_fit_target`].
pub const FIXED_POINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Max-norm step change of `g_n` that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting label density; all ones when absent.
    pub g_init: Option<Vec<f64>>,
    /// Reject `h` that vanishes on a source-supported feature cell.
    pub require_positive_h: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            g_init: None,
            require_positive_h: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    /// `g_0, g_1, …`; the last entry is the returned estimate.
    pub g_iterates: Vec<Vec<f64>>,
    /// `h_n(x) = Σ_y g_n(y) P(y|x)`.
    pub h_iterates: Vec<Vec<f64>>,
    /// `KL_{P_X}(h ∥ h_n)`.
    pub kl_values: Vec<f64>,
    /// `residual_em` of each iterate.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    /// Some iterate touched the positivity floor.
    pub boundary_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmSolution {
    pub g: RelativeDensity,
    pub trace: EmTrace,
}

struct Problem {
    nx: usize,
    ny: usize,
    px: Vec<f64>,
    py: Vec<f64>,
    h: Vec<f64>,
    pyx: Vec<Option<Vec<f64>>>,
    /// `P(x|y)`, row-major over `(x, y)`.
    pxy: Vec<f64>,
    feature_names: Vec<String>,
}

impl Problem {
    fn new(p: &JointTable, h: &RelativeDensity) -> Result<Self> {
        let (nx, ny) = (p.n_features(), p.n_labels());
        let (px, py) = p.marginals();
        h.ensure_normalized(&px)?;
        if let Some(x) = (0..nx).find(|&x| px[x] <= 0.0 && h.get(x) > 0.0) {
            return Err(Error::InfeasibleMarginals {
                axis: AxisName::Feature,
                cell: p.space().feature_cell(x).to_string(),
            });
        }
        let mut pxy = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                if py[y] > 0.0 {
                    pxy[x * ny + y] = p.mass(x, y) / py[y];
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            h: h.values().to_vec(),
            pyx: (0..nx).map(|x| p.label_given_feature(x)).collect(),
            pxy,
            px,
            py,
            feature_names: p.space().feature_cells().to_vec(),
        })
    }

    /// `h_g(x) = Σ_y g(y) P(y|x)`; 0 off the feature support.
    fn induced(&self, g: &[f64]) -> Vec<f64> {
        self.pyx
            .iter()
            .map(|row| match row {
                Some(r) => r.iter().zip(g).map(|(a, b)| a * b).sum(),
                None => 0.0,
            })
            .collect()
    }

    /// `Σ_x P(x|y) h(x) / h_g(x)` per label. Features with `h = 0` are
    /// skipped.
    fn ratios(&self, hg: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.ny];
        for x in 0..self.nx {
            if !(self.h[x] > 0.0) {
                continue;
            }
            if !(hg[x] > 0.0) {
                return Err(Error::ZeroDenominator {
                    axis: AxisName::Feature,
                    cell: self.feature_names[x].clone(),
                });
            }
            let w = self.h[x] / hg[x];
            for (y, acc) in s.iter_mut().enumerate() {
                *acc += self.pxy[x * self.ny + y] * w;
            }
        }
        Ok(s)
    }

    fn residual_from_ratios(&self, s: &[f64]) -> f64 {
        (0..self.ny)
            .filter(|&y| self.py[y] > 0.0)
            .map(|y| (1.0 - s[y]).abs())
            .fold(0.0, f64::max)
    }

    fn kl(&self, hg: &[f64]) -> Result<f64> {
        kl_values(&self.h, hg, &self.px)
    }

    /// `g_{n+1}(y) = g_n(y) Σ_x φ(x,y) Q_X(x) / Σ_z g_n(z) φ(x,z) P_Y(z)`.
    fn step_phi(&self, g: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let phi = |x: usize, y: usize| {
            if self.px[x] > 0.0 && self.py[y] > 0.0 {
                self.pxy[x * ny + y] / self.px[x]
            } else {
                0.0
            }
        };
        (0..ny)
            .map(|y| {
                if !(self.py[y] > 0.0) {
                    return g[y];
                }
                let s: f64 = (0..self.nx)
                    .filter(|&x| self.h[x] > 0.0)
                    .map(|x| {
                        let den: f64 = (0..ny).map(|z| g[z] * phi(x, z) * self.py[z]).sum();
                        phi(x, y) * self.h[x] * self.px[x] / den
                    })
                    .sum();
                g[y] * s
            })
            .collect()
    }
}

/// `max_y |1 − Σ_x P(x|y) h(x) / Σ_z g(z) P(z|x)|` over labels with source
/// mass. Zero exactly at interior fixed points of the EM update.
pub fn residual_em(p: &JointTable, h: &RelativeDensity, g: &RelativeDensity) -> Result<f64> {
    g.ensure_len(p.n_labels())?;
    let prob = Problem::new(p, h)?;
    let s = prob.ratios(&prob.induced(g.values()))?;
    Ok(prob.residual_from_ratios(&s))
}

/// Runs the EM recursion from `g_0` until the max-norm step falls below
/// `config.tol`.
pub fn em_estimate(p: &JointTable, h: &RelativeDensity, config: &EmConfig) -> Result<EmSolution> {
    let prob = Problem::new(p, h)?;
    let space = p.space();
    if config.require_positive_h {
        if let Some(x) = (0..prob.nx).find(|&x| prob.px[x] > 0.0 && !(prob.h[x] > 0.0)) {
            return Err(Error::NotPositive {
                what: "target feature density",
                axis: AxisName::Feature,
                cell: space.feature_cell(x).to_string(),
            });
        }
    }
    let mut g = match &config.g_init {
        Some(g0) => {
            let g0 = RelativeDensity::label(g0.clone())?;
            g0.ensure_normalized(&prob.py)?;
            g0.into_values()
        }
        None => vec![1.0; prob.ny],
    };
    if let Some(y) = (0..prob.ny).find(|&y| prob.py[y] > 0.0 && !(g[y] > 0.0)) {
        return Err(Error::NotPositive {
            what: "initial label density",
            axis: AxisName::Label,
            cell: space.label_cell(y).to_string(),
        });
    }
    // the h log h part of the KL does not depend on g
    let entropy_term: f64 = (0..prob.nx)
        .filter(|&x| prob.px[x] * prob.h[x] > 0.0)
        .map(|x| prob.px[x] * prob.h[x] * prob.h[x].ln())
        .sum();

    let mut hg = prob.induced(&g);
    let mut s = prob.ratios(&hg)?;
    let mut trace = EmTrace {
        g_iterates: vec![g.clone()],
        kl_values: vec![prob.kl(&hg)?],
        h_iterates: vec![hg.clone()],
        residuals: vec![prob.residual_from_ratios(&s)],
        converged: false,
        iterations_used: 0,
        boundary_hit: false,
    };

    for it in 1..=config.max_iter {
        let mut next: Vec<f64> = g.iter().zip(&s).map(|(a, b)| a * b).collect();
        if cfg!(debug_assertions) {
            let alt = prob.step_phi(&g);
            for (a, b) in next.iter().zip(&alt) {
                debug_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
        for (y, v) in next.iter_mut().enumerate() {
            if prob.py[y] > 0.0 && *v < G_FLOOR {
                *v = G_FLOOR;
                trace.boundary_hit = true;
            }
        }
        let step = next
            .iter()
            .zip(&g)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        g = next;
        hg = prob.induced(&g);
        s = prob.ratios(&hg)?;
        let kl = prob.kl(&hg)?;
        if cfg!(debug_assertions) {
            let cross: f64 = (0..prob.nx)
                .filter(|&x| prob.px[x] * prob.h[x] > 0.0)
                .map(|x| prob.px[x] * prob.h[x] * hg[x].ln())
                .sum();
            debug_assert!((kl - (entropy_term - cross)).abs() < 1e-10);
        }
        trace.g_iterates.push(g.clone());
        trace.h_iterates.push(hg.clone());
        trace.kl_values.push(kl);
        trace.residuals.push(prob.residual_from_ratios(&s));
        trace.iterations_used = it;
        if step < config.tol {
            trace.converged = true;
            return Ok(EmSolution {
                g: RelativeDensity::label(g)?,
                trace,
            });
        }
    }
    Err(Error::EmNotConverged(Box::new(trace)))
}

/// The FJS target `Q(x,y) = P(x,y) g(y) h(x) / Σ_z g(z) P(z|x)`, whose
/// feature density is `h`. Its label density is `g` exactly when `g` is a
/// fixed point of the EM update.
pub fn exact_fit_target(
    p: &JointTable,
    h: &RelativeDensity,
    g: &RelativeDensity,
) -> Result<JointTable> {
    g.ensure_len(p.n_labels())?;
    let prob = Problem::new(p, h)?;
    let hg = prob.induced(g.values());
    let s = prob.ratios(&hg)?;
    let residual = prob.residual_from_ratios(&s);
    if !(residual < FIXED_POINT_TOL) {
        return Err(Error::NotAFixedPoint { residual });
    }
    let (hv, gv) = (h.values(), g.values());
    p.reweight(|x, y| if hg[x] > 0.0 { gv[y] * hv[x] / hg[x] } else { 0.0 })
}
