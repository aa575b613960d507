//! Value iteration for the Lagrangian-relaxed detection problem.
//!
//! The cost-to-go on a uniform grid in `p` satisfies
//!
//! ```text
//! J(p)  = min{ λ_f(1−p),  p + min[B₀(p), λ_e(1−p) + B₁(p)] }
//! B₀(p) = J(Φ⁽⁰⁾(p))
//! B₁(p) = E[J(Φ⁽¹⁾(X, p))],   X ~ (1−Φ⁽⁰⁾(p)) f₀ + Φ⁽⁰⁾(p) f₁
//! ```
//!
//! `J` between grid points is piecewise linear. The expectation in `B₁` is a
//! Gauss–Legendre rule whose weights are renormalised per grid point, so the
//! discrete operator is monotone and sup-norm non-expansive.

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcdError, Result};
use crate::model::{GeometricPrior, ObservationModel};
use crate::posterior::{phi_skip, phi_take, ThresholdPair};

/// Lagrange multipliers on the false-alarm and observation constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    lambda_f: f64,
    lambda_e: f64,
}

impl CostParams {
    pub fn new(lambda_f: f64, lambda_e: f64) -> Result<Self> {
        if !(lambda_f.is_finite() && lambda_f >= 0.0) {
            return Err(invalid("lambda_f", format!("must be finite and >= 0, got {lambda_f}")));
        }
        if !(lambda_e.is_finite() && lambda_e >= 0.0) {
            return Err(invalid("lambda_e", format!("must be finite and >= 0, got {lambda_e}")));
        }
        Ok(Self { lambda_f, lambda_e })
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f
    }

    pub fn lambda_e(&self) -> f64 {
        self.lambda_e
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub grid_size: usize,
    pub max_iters: usize,
    pub quad_nodes: usize,
    /// Sweeps stop early once the sup-norm change falls below this.
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            grid_size: 2000,
            max_iters: 1500,
            quad_nodes: 129,
            tol: 1e-12,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if self.grid_size < 64 {
            return Err(invalid("grid_size", format!("must be >= 64, got {}", self.grid_size)));
        }
        if self.max_iters < 1 {
            return Err(invalid("max_iters", "must be >= 1"));
        }
        if self.quad_nodes < 16 {
            return Err(invalid("quad_nodes", format!("must be >= 16, got {}", self.quad_nodes)));
        }
        if !(self.tol >= 0.0) {
            return Err(invalid("tol", "must be >= 0"));
        }
        Ok(())
    }
}

/// Cost-to-go and its components on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub p: Vec<f64>,
    pub j: Vec<f64>,
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub d: Vec<f64>,
    pub costs: CostParams,
    pub iterations_run: usize,
    pub sup_norm_delta: f64,
    /// False when `max_iters` was reached before the tolerance.
    pub converged: bool,
    /// Sup-norm change after each sweep.
    pub residuals: Vec<f64>,
}

/// One line of the grid dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub p: f64,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    pub d: f64,
    pub lambda_e_line: f64,
    pub stop_cost: f64,
}

impl ValueGrid {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `p + min[B₀, λ_e(1−p) + B₁]` at grid index `i`.
    pub fn continuation_cost(&self, i: usize) -> f64 {
        let p = self.p[i];
        p + self.b0[i].min(self.costs.lambda_e * (1.0 - p) + self.b1[i])
    }

    /// `λ_f(1−p) − continuation`; stopping is optimal where this is `≤ 0`.
    pub fn stop_margin(&self, i: usize) -> f64 {
        self.costs.lambda_f * (1.0 - self.p[i]) - self.continuation_cost(i)
    }

    /// `d − λ_e(1−p)`; observing is optimal where this is `≥ 0`.
    pub fn take_margin(&self, i: usize) -> f64 {
        self.d[i] - self.costs.lambda_e * (1.0 - self.p[i])
    }

    fn interpolate(&self, p: f64, f: impl Fn(usize) -> f64) -> f64 {
        let (i, w) = cell(p, self.p.len());
        if w == 0.0 {
            f(i)
        } else {
            (1.0 - w) * f(i) + w * f(i + 1)
        }
    }

    pub fn stop_margin_at(&self, p: f64) -> f64 {
        self.interpolate(p, |i| self.stop_margin(i))
    }

    pub fn take_margin_at(&self, p: f64) -> f64 {
        self.interpolate(p, |i| self.take_margin(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = GridRow> + '_ {
        (0..self.len()).map(move |i| {
            let p = self.p[i];
            GridRow {
                p,
                j: self.j[i],
                b0: self.b0[i],
                b1: self.b1[i],
                d: self.d[i],
                lambda_e_line: self.costs.lambda_e * (1.0 - p),
                stop_cost: self.costs.lambda_f * (1.0 - p),
            }
        })
    }
}

/// Left grid index and interpolation weight for `p` on a uniform grid of `m` points.
#[inline]
fn cell(p: f64, m: usize) -> (usize, f64) {
    let s = p.clamp(0.0, 1.0) * (m - 1) as f64;
    let i = (s.floor() as usize).min(m - 2);
    (i, s - i as f64)
}

#[inline]
fn lerp(values: &[f64], (i, w): (usize, f64)) -> f64 {
    values[i] + w * (values[i + 1] - values[i])
}

/// Interpolation stencils that do not change between sweeps.
struct Stencils {
    skip: Vec<(usize, f64)>,
    /// Row-major `grid_size × quad_nodes`.
    take: Vec<(usize, f64)>,
    take_weight: Vec<f64>,
    nodes: usize,
}

impl Stencils {
    fn build<M: ObservationModel>(model: &M, rho: f64, p: &[f64], quad_nodes: usize) -> Result<Self> {
        let rule = GaussLegendre::new(quad_nodes)
            .map_err(|e| invalid("quad_nodes", e.to_string()))?;
        let (lo, hi) = model.quadrature_support();
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let xs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, w)| (mid + half * t, half * w))
            .collect();
        let dens: Vec<(f64, f64)> = xs
            .iter()
            .map(|&(x, _)| (model.density_pre(x), model.density_post(x)))
            .collect();

        let m = p.len();
        let skip = p.iter().map(|&pi| cell(phi_skip(pi, rho), m)).collect();
        let mut take = Vec::with_capacity(m * xs.len());
        let mut take_weight = Vec::with_capacity(m * xs.len());
        for &pi in p {
            let q = phi_skip(pi, rho);
            let start = take_weight.len();
            for (&(x, w), &(f0, f1)) in xs.iter().zip(&dens) {
                take.push(cell(phi_take(x, pi, rho, model), m));
                take_weight.push(w * ((1.0 - q) * f0 + q * f1));
            }
            let total: f64 = take_weight[start..].iter().sum();
            for w in &mut take_weight[start..] {
                *w /= total;
            }
        }
        Ok(Self {
            skip,
            take,
            take_weight,
            nodes: xs.len(),
        })
    }

    #[inline]
    fn b0(&self, j: &[f64], i: usize) -> f64 {
        lerp(j, self.skip[i])
    }

    #[inline]
    fn b1(&self, j: &[f64], i: usize) -> f64 {
        let r = i * self.nodes..(i + 1) * self.nodes;
        self.take[r.clone()]
            .iter()
            .zip(&self.take_weight[r])
            .map(|(&c, &w)| w * lerp(j, c))
            .sum()
    }
}

/// Runs synchronous (Jacobi) value iteration from `J ≡ 0`.
pub fn value_iterate<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    costs: CostParams,
    settings: SolverSettings,
) -> Result<ValueGrid> {
    settings.validate()?;
    let m = settings.grid_size;
    let p: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let st = Stencils::build(model, prior.rho(), &p, settings.quad_nodes)?;
    let (lf, le) = (costs.lambda_f, costs.lambda_e);

    let mut j = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut residuals = Vec::with_capacity(settings.max_iters);
    let mut converged = false;
    for _ in 0..settings.max_iters {
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            let pi = p[i];
            let cont = pi + st.b0(&j, i).min(le * (1.0 - pi) + st.b1(&j, i));
            *out = (lf * (1.0 - pi)).min(cont);
        });
        let delta = j
            .iter()
            .zip(&next)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        std::mem::swap(&mut j, &mut next);
        residuals.push(delta);
        if delta < settings.tol {
            converged = true;
            break;
        }
    }

    let b0: Vec<f64> = (0..m).into_par_iter().map(|i| st.b0(&j, i)).collect();
    let b1: Vec<f64> = (0..m).into_par_iter().map(|i| st.b1(&j, i)).collect();
    let d = b0.iter().zip(&b1).map(|(x, y)| x - y).collect();
    Ok(ValueGrid {
        p,
        j,
        b0,
        b1,
        d,
        costs,
        iterations_run: residuals.len(),
        sup_norm_delta: residuals.last().copied().unwrap_or(0.0),
        converged,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    TwoThreshold,
    MultiRegion,
}

/// Decision regions read off a solved grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStructure {
    /// `A`: midpoint of the cell where stopping first becomes optimal.
    pub stop_threshold: f64,
    /// Width of that cell.
    pub stop_threshold_uncertainty: f64,
    /// Sign changes of `d − λ_e(1−p)` on `[0, A)`.
    pub take_region_boundaries: Vec<f64>,
    /// Sign changes of `d − λ_e(1−p)` on `[0, 1)`, including those in the stop region.
    pub all_boundaries: Vec<f64>,
    /// Whether observing is optimal at `p = 0`.
    pub takes_at_zero: bool,
    pub classification: Classification,
    /// `B` for a two-threshold structure (`0` when every continuation state observes).
    pub lower_threshold: Option<f64>,
    /// `C`: first boundary where the take region ends, wherever it lies.
    pub upper_intersection: Option<f64>,
}

impl PolicyStructure {
    /// The `(A, B)` pair when the structure is two-threshold.
    pub fn threshold_pair(&self) -> Result<ThresholdPair> {
        match (self.classification, self.lower_threshold) {
            (Classification::TwoThreshold, Some(b)) => {
                ThresholdPair::from_probabilities(self.stop_threshold, b)
            }
            _ => Err(QcdError::Structure(
                "take region below the stop threshold is not a single interval".into(),
            )),
        }
    }
}

pub fn extract_structure(grid: &ValueGrid) -> Result<PolicyStructure> {
    let m = grid.len();
    if m < 2 {
        return Err(QcdError::Configuration("empty value grid".into()));
    }
    let first_stop = (0..m - 1).find(|&i| grid.stop_margin(i) <= 0.0).ok_or_else(|| {
        QcdError::Structure(format!(
            "stopping is never optimal below p = 1 (lambda_f = {})",
            grid.costs.lambda_f
        ))
    })?;
    let (stop_threshold, width) = if first_stop == 0 {
        (0.0, 0.0)
    } else {
        let (lo, hi) = (grid.p[first_stop - 1], grid.p[first_stop]);
        (0.5 * (lo + hi), hi - lo)
    };

    let g: Vec<f64> = (0..m).map(|i| grid.take_margin(i)).collect();
    let mut all = Vec::new();
    let mut upper_intersection = None;
    for i in 1..m - 1 {
        let (was, is) = (g[i - 1] >= 0.0, g[i] >= 0.0);
        if was != is {
            let root = grid.p[i - 1] + (grid.p[i] - grid.p[i - 1]) * g[i - 1] / (g[i - 1] - g[i]);
            all.push(root);
            if was && upper_intersection.is_none() {
                upper_intersection = Some(root);
            }
        }
    }
    let below: Vec<f64> = all.iter().copied().filter(|&r| r < stop_threshold).collect();
    let takes_at_zero = g[0] >= 0.0;
    let (classification, lower_threshold) = match (takes_at_zero, below.as_slice()) {
        (true, []) => (Classification::TwoThreshold, Some(0.0)),
        (false, [b]) => (Classification::TwoThreshold, Some(*b)),
        // Never observes below A: the degenerate pair B = A.
        (false, []) => (Classification::TwoThreshold, Some(stop_threshold)),
        _ => (Classification::MultiRegion, None),
    };
    Ok(PolicyStructure {
        stop_threshold,
        stop_threshold_uncertainty: width,
        take_region_boundaries: below,
        all_boundaries: all,
        takes_at_zero,
        classification,
        lower_threshold,
        upper_intersection,
    })
}
