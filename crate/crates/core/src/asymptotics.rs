//! Analytical approximations for the two-threshold policy.
//!
//! The renewal-theoretic constants are not available in closed form, so they
//! are estimated by Monte Carlo:
//!
//! * the overshoot law `R` of `Σ Y_k` (under `f₁`) over a high wall, giving
//!   `r̄ = ∫x dR` and `∫e^{−x} dR`;
//! * the a.s. limit `η(z₀) = log[e^{z₀} + Σ_{k≥0} ρ(1−ρ)^k Π_{i≤k} f₀/f₁(X_i)]`;
//! * `P₁(Z_λ < b)` through the likelihood-ratio identity under `f₀`.
//!
//! Everything else is a formula over those quantities.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcdError, Result};
use crate::model::{y_drift, GeometricPrior, ObservationModel, Regime};
use crate::montecarlo::Estimate;
use crate::posterior::{log_add_exp, t_closed_form, t_exact, LogOddsDynamics};
use crate::rng::{child_rng, stream, SimRng};

const PATH_BATCH: usize = 4096;

/// Log-scale gap below the running sum at which a series term is negligible.
const ETA_TAIL_CUTOFF: f64 = 60.0;

/// Runs `n` independent paths in fixed batches; output order is the path order.
fn sample_paths<F>(n: usize, seed: u64, label: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut SimRng) -> f64 + Sync,
{
    let n_batches = n.div_ceil(PATH_BATCH);
    let parts: Vec<Vec<f64>> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = child_rng(seed, stream::PATH + label, bi as u64);
            let len = PATH_BATCH.min(n - bi * PATH_BATCH);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

fn mean_se(xs: impl ExactSizeIterator<Item = f64> + Clone) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        value: mean,
        se: (var / n).sqrt(),
        n: n as u64,
    }
}

fn post_drift<M: ObservationModel>(model: &M, prior: &GeometricPrior) -> Result<f64> {
    let mu = y_drift(model, prior, Regime::Post);
    if mu > 0.0 {
        Ok(mu)
    } else {
        Err(QcdError::Domain(format!("post-change increment drift {mu} is not positive")))
    }
}

/// Empirical limiting overshoot law `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootDistribution {
    #[serde(skip)]
    samples: Vec<f64>,
    pub r_bar: Estimate,
    pub laplace_at_one: Estimate,
    pub n_crossings: usize,
    pub wall_height: f64,
}

impl OvershootDistribution {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `∫ g dR` over the empirical law.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.samples.iter().map(|&x| g(x)).sum::<f64>() / self.samples.len() as f64
    }
}

/// Overshoot of `Σ Y_k`, `Y = log L(X) + |log(1−ρ)|`, `X ~ f₁`, over `wall_height`.
///
/// `wall_height = None` uses `50·E₁[Y]`.
pub fn estimate_overshoot<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    n_crossings: usize,
    wall_height: Option<f64>,
    seed: u64,
) -> Result<OvershootDistribution> {
    let mu = post_drift(model, prior)?;
    if n_crossings < 2 {
        return Err(invalid("n_crossings", "must be at least 2"));
    }
    let wall = wall_height.unwrap_or(50.0 * mu);
    if !(wall > 0.0) {
        return Err(invalid("wall_height", format!("must be positive, got {wall}")));
    }
    let c = prior.skip_drift();
    let samples = sample_paths(n_crossings, seed, 1, |rng| {
        let mut s = 0.0;
        while s <= wall {
            s += model.log_lr(model.sample_post(rng)) + c;
        }
        s - wall
    });
    Ok(OvershootDistribution {
        r_bar: mean_se(samples.iter().copied()),
        laplace_at_one: mean_se(samples.iter().map(|&x| (-x).exp())),
        n_crossings,
        wall_height: wall,
        samples,
    })
}

/// `e^{−a} ∫ e^{−x} dR(x)`.
pub fn pfa_approx(a: f64, overshoot: &OvershootDistribution) -> f64 {
    (-a).exp() * overshoot.laplace_at_one.value
}

/// Per-path values of `log Σ_{k≥0} ρ(1−ρ)^k Π_{i≤k} f₀/f₁(X_i)`, from which `η(z₀)` follows for any `z₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    #[serde(skip)]
    log_series: Vec<f64>,
    pub truncation_k: u64,
    pub n_paths: usize,
}

impl EtaEstimate {
    /// `E[η(z₀)]`; `z₀ = −∞` is allowed.
    pub fn mean_at(&self, z0: f64) -> Estimate {
        mean_se(self.log_series.iter().map(|&s| log_add_exp(z0, s)))
    }

    pub fn minus_infinity(&self) -> Estimate {
        self.mean_at(f64::NEG_INFINITY)
    }
}

/// Smallest `k` with `(1−ρ)^k < 1e−6`.
pub fn default_eta_truncation(rho: f64) -> u64 {
    ((1e-6f64).ln() / (-rho).ln_1p()).ceil() as u64
}

/// Samples the η series under `f₁`, truncated at `truncation_k` terms or once
/// further terms are below `e^{−60}` of the running sum.
pub fn estimate_eta<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    n_paths: usize,
    truncation_k: Option<u64>,
    seed: u64,
) -> Result<EtaEstimate> {
    post_drift(model, prior)?;
    if n_paths < 2 {
        return Err(invalid("n_paths", "must be at least 2"));
    }
    let rho = prior.rho();
    let kmax = truncation_k.unwrap_or_else(|| default_eta_truncation(rho));
    let (ln_rho, ln_q) = (rho.ln(), (-rho).ln_1p());
    let log_series = sample_paths(n_paths, seed, 2, |rng| {
        let mut log_s = ln_rho;
        let mut term = ln_rho;
        for _ in 1..=kmax {
            term += ln_q - model.log_lr(model.sample_post(rng));
            log_s = log_add_exp(log_s, term);
            if term < log_s - ETA_TAIL_CUTOFF {
                break;
            }
        }
        log_s
    });
    Ok(EtaEstimate {
        log_series,
        truncation_k: kmax,
        n_paths,
    })
}

/// `a / (D(f₁,f₀) + |log(1−ρ)|)`.
pub fn add_first_order<M: ObservationModel>(a: f64, model: &M, prior: &GeometricPrior) -> f64 {
    a / (model.kl_post_pre() + prior.skip_drift())
}

/// `(a − E[η] + r̄) / (D(f₁,f₀) + |log(1−ρ)|)` for a given η mean.
pub fn add_shiryaev<M: ObservationModel>(a: f64, model: &M, prior: &GeometricPrior, eta_mean: f64, r_bar: f64) -> f64 {
    (a - eta_mean + r_bar) / (model.kl_post_pre() + prior.skip_drift())
}

/// `E₁[ν_b]`: the same form with `E[η(b)]`. Also the ANO₁ approximation.
pub fn e1_nu_b<M: ObservationModel>(a: f64, model: &M, prior: &GeometricPrior, eta_at_b: f64, r_bar: f64) -> f64 {
    add_shiryaev(a, model, prior, eta_at_b, r_bar)
}

/// The pieces of the ANO approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnoApprox {
    /// `E∞[λ̂] ≈ (r̄ + log(1+ρe^{−b})) / (D − |log(1−ρ)|)`.
    pub lambda_hat_mean: f64,
    /// `E∞[t(Z_λ̂, b)] ≈ ∫ (log(1+e^b) − log(1+e^{b−x}))/|log(1−ρ)| dR(x)`.
    pub t_zhat_b_mean: f64,
    /// `ρ⁻¹ E∞[λ̂]/(E∞[λ̂] + E∞[t]) · 1/(1+e^b)`.
    pub ano: f64,
    /// Same without the binomial step: `E∞[λ̂]/(1 − E[(1−ρ)^{λ̂+t}]) · 1/(1+e^b)`,
    /// with `λ̂` at its mean and `t` over `R`.
    pub ano_unlinearized: f64,
}

pub fn ano_approx<M: ObservationModel>(
    b: f64,
    model: &M,
    prior: &GeometricPrior,
    overshoot: &OvershootDistribution,
) -> Result<AnoApprox> {
    if !b.is_finite() {
        return Err(invalid("b", format!("must be finite, got {b}")));
    }
    let (d, c, rho) = (model.kl_post_pre(), prior.skip_drift(), prior.rho());
    if d <= c {
        return Err(QcdError::Domain(format!(
            "ANO approximation needs D(f1,f0) > |log(1-rho)|, got {d} <= {c}"
        )));
    }
    let r_bar = overshoot.r_bar.value;
    let lambda_hat_mean = (r_bar + (rho * (-b).exp()).ln_1p()) / (d - c);
    let t_zhat_b_mean = overshoot.integrate(|x| t_closed_form(b - x, b, rho));
    let tail = 1.0 / (1.0 + b.exp());
    let ano = lambda_hat_mean / (lambda_hat_mean + t_zhat_b_mean) / rho * tail;
    let ln_q = (-rho).ln_1p();
    let survive = overshoot.integrate(|x| ((lambda_hat_mean + t_closed_form(b - x, b, rho)) * ln_q).exp());
    Ok(AnoApprox {
        lambda_hat_mean,
        t_zhat_b_mean,
        ano,
        ano_unlinearized: lambda_hat_mean / (1.0 - survive) * tail,
    })
}

/// One path of `λ̂`: start at `b`, observe while `Z ≥ b` (`a = ∞`), stop on the first
/// `Z_k < b`. Returns the accumulated log-likelihood ratio, or `None` if `max_steps` ran out.
fn below_b_path<M: ObservationModel, R: Rng + ?Sized>(
    model: &M,
    dynamics: &LogOddsDynamics,
    b: f64,
    max_steps: u64,
    under_post: bool,
    rng: &mut R,
) -> Option<f64> {
    let mut z = b;
    let mut llr = 0.0;
    for _ in 0..max_steps {
        let x = if under_post { model.sample_post(rng) } else { model.sample_pre(rng) };
        let l = model.log_lr(x);
        llr += l;
        z = dynamics.take(z, l);
        if z < b {
            return Some(llr);
        }
    }
    None
}

/// `P₁(Z_λ < b)` with `a = ∞` by the likelihood-ratio identity: simulate under `f₀`
/// and average `Π f₁/f₀(X_i)` over the down-crossing paths.
pub fn p1_below_b<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    b: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if !b.is_finite() {
        return Err(invalid("b", format!("must be finite, got {b}")));
    }
    let pre = y_drift(model, prior, Regime::Pre);
    if pre >= 0.0 {
        return Err(QcdError::Domain(format!(
            "pre-change increment drift {pre} is not negative, so the down-crossing is not certain"
        )));
    }
    let dynamics = LogOddsDynamics::new(prior.rho());
    let max_steps = (1e4 / -pre).ceil() as u64;
    let w = sample_paths(n_paths, seed, 3, |rng| {
        below_b_path(model, &dynamics, b, max_steps, false, rng).map_or(0.0, f64::exp)
    });
    Ok(mean_se(w.into_iter()))
}

/// Direct estimate of the same probability: simulate under `f₁` and count
/// down-crossings of `b` before the log-odds rise `escape` above `b`.
pub fn p1_below_b_direct<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    b: f64,
    escape: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if !b.is_finite() || !(escape > 0.0) {
        return Err(invalid("b", "needs finite b and positive escape height"));
    }
    post_drift(model, prior)?;
    let dynamics = LogOddsDynamics::new(prior.rho());
    let top = b + escape;
    let hits = sample_paths(n_paths, seed, 4, |rng| {
        let mut z = b;
        loop {
            z = dynamics.take(z, model.log_lr(model.sample_post(rng)));
            if z < b {
                return 1.0;
            }
            if z > top {
                return 0.0;
            }
        }
    });
    Ok(mean_se(hits.into_iter()))
}

/// Inputs to the delay approximations. Missing entries are reported by name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AddComponents {
    pub r_bar: Option<f64>,
    /// `E[η(b)]`, used for the passage time from `b` to `a`.
    pub eta_at_b: Option<f64>,
    pub lambda_hat_mean: Option<f64>,
    pub t_zhat_b_mean: Option<f64>,
    pub p1_below_b: Option<f64>,
}

struct Complete {
    r_bar: f64,
    eta_at_b: f64,
    lambda_hat_mean: f64,
    t_zhat_b_mean: f64,
    p1_below_b: f64,
}

impl AddComponents {
    fn require(&self, need_ano_terms: bool) -> Result<Complete> {
        let mut missing = Vec::new();
        let mut take = |v: Option<f64>, name: &'static str, needed: bool| match v {
            Some(x) => x,
            None => {
                if needed {
                    missing.push(name);
                }
                f64::NAN
            }
        };
        let out = Complete {
            r_bar: take(self.r_bar, "r_bar", true),
            eta_at_b: take(self.eta_at_b, "eta_at_b", true),
            lambda_hat_mean: take(self.lambda_hat_mean, "lambda_hat_mean", true),
            t_zhat_b_mean: take(self.t_zhat_b_mean, "t_zhat_b_mean", need_ano_terms),
            p1_below_b: take(self.p1_below_b, "p1_below_b", true),
        };
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(QcdError::Assembly(missing))
        }
    }
}

/// `t − E[Γ | Γ ≤ t]` for `Γ ~ Geometric(ρ)` on `{1, 2, …}` and integer `t ≥ 1`.
pub fn truncated_geometric_residual(t: u64, rho: f64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let q = 1.0 - rho;
    let tf = t as f64;
    let qt = q.powf(tf);
    // Σ_{k=1}^{t} k q^{k−1} ρ = (1 − (t+1) q^t + t q^{t+1}) / ρ
    let partial = (1.0 - (tf + 1.0) * qt + tf * qt * q) / rho;
    tf - partial / (1.0 - qt)
}

/// `ADDˢ = E₁[λ | Z_λ > a] + (E₁[λ | Z_λ < b] + t(b − r̄, b)) · P/(1 − P)`, `P = P₁(Z_λ < b)`.
pub fn adds_cycle<M: ObservationModel>(
    a: f64,
    b: f64,
    model: &M,
    prior: &GeometricPrior,
    components: &AddComponents,
) -> Result<f64> {
    let c = components.require(false)?;
    let up = e1_nu_b(a, model, prior, c.eta_at_b, c.r_bar);
    let down = c.lambda_hat_mean + t_closed_form(b - c.r_bar, b, prior.rho());
    Ok(up + down * c.p1_below_b / (1.0 - c.p1_below_b))
}

/// Terms of the refined delay approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddNewBreakdown {
    pub add_new: f64,
    pub adds: f64,
    /// `P_b = P(Z_Γ ≥ b | τ ≥ Γ)`.
    pub p_b: f64,
    /// `P(Γ > t(−∞,b), Z_Γ < b)`.
    pub p_late_below: f64,
    /// `P(Γ ≤ t(−∞,b))`.
    pub p_early: f64,
    pub t_late: f64,
    pub t_early: f64,
    pub passage: f64,
}

/// `P_b E[λ|C] + (1−P_b)(E[t(Z_Γ,b)|A] + ADDˢ)` with the event `{Z_Γ ≥ b, Z ↗ b}` ignored.
pub fn add_new<M: ObservationModel>(
    a: f64,
    b: f64,
    model: &M,
    prior: &GeometricPrior,
    components: &AddComponents,
) -> Result<AddNewBreakdown> {
    let c = components.require(true)?;
    let rho = prior.rho();
    let adds = adds_cycle(a, b, model, prior, components)?;
    let passage = e1_nu_b(a, model, prior, c.eta_at_b, c.r_bar);
    let (el, et) = (c.lambda_hat_mean, c.t_zhat_b_mean);
    let tail = 1.0 / (1.0 + b.exp());
    let p_b = el / (el + et) * tail;
    let p_late_below = et / (el + et) * tail;
    let p_early = b.exp() * tail;
    let t_late = truncated_geometric_residual(t_exact(b - c.r_bar, b, rho), rho);
    let t_early = truncated_geometric_residual(t_exact(f64::NEG_INFINITY, b, rho), rho);
    let add_new = p_b * passage + p_late_below * t_late + p_early * t_early + (1.0 - p_b) * adds;
    Ok(AddNewBreakdown {
        add_new,
        adds,
        p_b,
        p_late_below,
        p_early,
        t_late,
        t_early,
        passage,
    })
}

/// Monte Carlo budgets for [`approx_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxSettings {
    pub n_crossings: usize,
    /// Wall height in units of `E₁[Y]`.
    pub wall_multiple: f64,
    pub n_eta_paths: usize,
    pub eta_truncation_k: Option<u64>,
    pub n_p1_paths: usize,
    pub seed: u64,
}

impl Default for ApproxSettings {
    fn default() -> Self {
        Self {
            n_crossings: 1_000_000,
            wall_multiple: 50.0,
            n_eta_paths: 1_000_000,
            eta_truncation_k: None,
            n_p1_paths: 1_000_000,
            seed: 0x5eed,
        }
    }
}

/// The model-level constants shared by every `(a, b)` at one `(θ, ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalConstants {
    pub overshoot: OvershootDistribution,
    pub eta: EtaEstimate,
}

pub fn renewal_constants<M: ObservationModel>(
    model: &M,
    prior: &GeometricPrior,
    settings: &ApproxSettings,
) -> Result<RenewalConstants> {
    let wall = settings.wall_multiple * post_drift(model, prior)?;
    Ok(RenewalConstants {
        overshoot: estimate_overshoot(model, prior, settings.n_crossings, Some(wall), settings.seed)?,
        eta: estimate_eta(model, prior, settings.n_eta_paths, settings.eta_truncation_k, settings.seed)?,
    })
}

/// All approximations at one `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub a: f64,
    pub b: f64,
    pub pfa_approx: f64,
    pub add_first_order: f64,
    /// Second-order delay with `E[η(−∞)]`.
    pub add_shiryaev: f64,
    /// Second-order delay with `E[η(b)]`, i.e. `E₁[ν_b]`.
    pub add_shiryaev_from_b: f64,
    pub add_new: Option<f64>,
    pub adds_cycle: Option<f64>,
    pub ano_approx: Option<f64>,
    pub ano_approx_unlinearized: Option<f64>,
    pub ano_percent_approx: Option<f64>,
    pub ano1_approx: f64,
    pub e1_nu_b: f64,
    pub lambda_hat_mean: Option<f64>,
    pub t_zhat_b_mean: Option<f64>,
    pub p1_below_b: Option<f64>,
    pub p1_below_b_se: Option<f64>,
    pub p_b: Option<f64>,
    pub r_bar: f64,
    pub laplace_at_one: f64,
    pub eta_minus_inf: f64,
    pub eta_at_b: f64,
}

/// Assembles every approximation at `(a, b)` from shared renewal constants.
///
/// `b = −∞` (Shiryaev) leaves the `b`-specific quantities empty.
pub fn approx_report<M: ObservationModel>(
    a: f64,
    b: f64,
    model: &M,
    prior: &GeometricPrior,
    constants: &RenewalConstants,
    settings: &ApproxSettings,
) -> Result<ApproxReport> {
    if !a.is_finite() || b.is_nan() || b >= a {
        return Err(invalid("b", format!("need finite a and b < a, got a={a}, b={b}")));
    }
    let r_bar = constants.overshoot.r_bar.value;
    let eta_minus_inf = constants.eta.minus_infinity().value;
    let eta_at_b = constants.eta.mean_at(b).value;
    let e1 = e1_nu_b(a, model, prior, eta_at_b, r_bar);
    let mut report = ApproxReport {
        a,
        b,
        pfa_approx: pfa_approx(a, &constants.overshoot),
        add_first_order: add_first_order(a, model, prior),
        add_shiryaev: add_shiryaev(a, model, prior, eta_minus_inf, r_bar),
        add_shiryaev_from_b: e1,
        add_new: None,
        adds_cycle: None,
        ano_approx: None,
        ano_approx_unlinearized: None,
        ano_percent_approx: None,
        ano1_approx: e1,
        e1_nu_b: e1,
        lambda_hat_mean: None,
        t_zhat_b_mean: None,
        p1_below_b: None,
        p1_below_b_se: None,
        p_b: None,
        r_bar,
        laplace_at_one: constants.overshoot.laplace_at_one.value,
        eta_minus_inf,
        eta_at_b,
    };
    if b.is_finite() {
        let ano = ano_approx(b, model, prior, &constants.overshoot)?;
        let p1 = p1_below_b(model, prior, b, settings.n_p1_paths, settings.seed)?;
        let comps = AddComponents {
            r_bar: Some(r_bar),
            eta_at_b: Some(eta_at_b),
            lambda_hat_mean: Some(ano.lambda_hat_mean),
            t_zhat_b_mean: Some(ano.t_zhat_b_mean),
            p1_below_b: Some(p1.value),
        };
        let new = add_new(a, b, model, prior, &comps)?;
        report.add_new = Some(new.add_new);
        report.adds_cycle = Some(new.adds);
        report.p_b = Some(new.p_b);
        report.ano_approx = Some(ano.ano);
        report.ano_approx_unlinearized = Some(ano.ano_unlinearized);
        report.ano_percent_approx = Some(ano.ano * prior.rho() / (1.0 - prior.pi0()) * 100.0);
        report.lambda_hat_mean = Some(ano.lambda_hat_mean);
        report.t_zhat_b_mean = Some(ano.t_zhat_b_mean);
        report.p1_below_b = Some(p1.value);
        report.p1_below_b_se = Some(p1.se);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianMeanShift;

    fn gauss(theta: f64) -> GaussianMeanShift {
        GaussianMeanShift::new(theta).unwrap()
    }

    fn prior(rho: f64) -> GeometricPrior {
        GeometricPrior::new(rho).unwrap()
    }

    #[test]
    fn first_order_examples() {
        let m = gauss(0.75);
        let p = prior(0.01);
        assert!((add_first_order(6.467, &m, &p) - 22.2).abs() < 0.05);
        assert_eq!(add_first_order(0.0, &m, &p), 0.0);
        assert!((add_first_order(2.0 * 6.467, &m, &p) - 2.0 * add_first_order(6.467, &m, &p)).abs() < 1e-12);
    }

    #[test]
    fn second_order_rearrangement_is_exact() {
        let m = gauss(0.75);
        let p = prior(0.01);
        let s = m.kl_post_pre() + p.skip_drift();
        let (eta, r) = (-0.7, 0.55);
        let lhs = add_first_order(6.0, &m, &p);
        assert!((lhs - (add_shiryaev(6.0, &m, &p, eta, r) - (r - eta) / s)).abs() < 1e-12);
        assert!(lhs <= add_shiryaev(6.0, &m, &p, eta, r) + eta.abs() / s);
    }

    #[test]
    fn overshoot_is_positive_and_laplace_below_one() {
        let o = estimate_overshoot(&gauss(1.0), &prior(0.05), 20_000, None, 3).unwrap();
        assert!(o.r_bar.value > 0.0);
        assert!(o.laplace_at_one.value > 0.0 && o.laplace_at_one.value < 1.0);
        assert!(o.samples().iter().all(|&x| x > 0.0));
        assert!(estimate_overshoot(&gauss(1.0), &prior(0.05), 1, None, 3).is_err());
    }

    #[test]
    fn pfa_ratio_is_constant_in_a() {
        let o = estimate_overshoot(&gauss(0.75), &prior(0.01), 5_000, None, 1).unwrap();
        let r = |a: f64| pfa_approx(a, &o) * a.exp();
        assert!((r(3.0) - r(9.0)).abs() < 1e-12);
        assert!(pfa_approx(4.0, &o) <= (-4.0f64).exp());
    }

    #[test]
    fn eta_respects_jensen_bound() {
        let eta = estimate_eta(&gauss(0.75), &prior(0.01), 20_000, None, 5).unwrap();
        for z0 in [f64::NEG_INFINITY, -2.2, 0.0, 1.0] {
            let e = eta.mean_at(z0);
            let bound = if z0 == f64::NEG_INFINITY { 0.0 } else { z0.exp().ln_1p() };
            assert!(e.value <= bound + 3.0 * e.se, "z0={z0}: {e:?} vs {bound}");
        }
        let lo = eta.mean_at(-2.2).value;
        let hi = eta.mean_at(1.0).value;
        assert!(hi > lo);
    }

    #[test]
    fn eta_vanishes_as_rho_tends_to_one() {
        let eta = estimate_eta(&gauss(1.0), &prior(1.0 - 1e-9), 2_000, None, 2).unwrap();
        let v = eta.minus_infinity().value;
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn ano_limits_and_drift_condition() {
        let o = estimate_overshoot(&gauss(0.75), &prior(0.01), 5_000, None, 1).unwrap();
        let lo = ano_approx(-2.2, &gauss(0.75), &prior(0.01), &o).unwrap().ano;
        let hi = ano_approx(0.85, &gauss(0.75), &prior(0.01), &o).unwrap().ano;
        let far = ano_approx(40.0, &gauss(0.75), &prior(0.01), &o).unwrap().ano;
        assert!(lo > hi && hi > far && far < 1e-10);
        // D = 0.005 < |log 0.9|
        let o2 = estimate_overshoot(&gauss(0.1), &prior(0.1), 100, None, 1).unwrap();
        assert!(matches!(ano_approx(0.0, &gauss(0.1), &prior(0.1), &o2), Err(QcdError::Domain(_))));
    }

    #[test]
    fn truncated_geometric_residual_matches_direct_sum() {
        for (t, rho) in [(1u64, 0.1), (7, 0.05), (120, 0.01), (3000, 0.001)] {
            let q: f64 = 1.0 - rho;
            let direct: f64 = (1..=t).map(|k| k as f64 * q.powi(k as i32 - 1) * rho).sum();
            let expect = t as f64 - direct / (1.0 - q.powi(t as i32));
            assert!((truncated_geometric_residual(t, rho) - expect).abs() < 1e-8 * t as f64);
        }
        assert!(truncated_geometric_residual(1, 0.3).abs() < 1e-12);
    }

    #[test]
    fn assembly_lists_missing_components() {
        let m = gauss(0.75);
        let p = prior(0.05);
        let comps = AddComponents {
            r_bar: Some(0.5),
            eta_at_b: Some(1.0),
            ..AddComponents::default()
        };
        match add_new(5.0, 1.0, &m, &p, &comps) {
            Err(QcdError::Assembly(names)) => {
                assert_eq!(names, vec!["lambda_hat_mean", "t_zhat_b_mean", "p1_below_b"])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_cycle_when_no_down_crossing() {
        let m = gauss(0.75);
        let p = prior(0.01);
        let comps = AddComponents {
            r_bar: Some(0.5),
            eta_at_b: Some(-0.3),
            lambda_hat_mean: Some(4.0),
            t_zhat_b_mean: None,
            p1_below_b: Some(0.0),
        };
        let v = adds_cycle(6.467, -2.2, &m, &p, &comps).unwrap();
        assert!((v - e1_nu_b(6.467, &m, &p, -0.3, 0.5)).abs() < 1e-12);
        let more = AddComponents {
            p1_below_b: Some(0.3),
            ..comps
        };
        assert!(adds_cycle(6.467, -2.2, &m, &p, &more).unwrap() > v);
        assert!(adds_cycle(8.0, -2.2, &m, &p, &more).unwrap() > adds_cycle(6.467, -2.2, &m, &p, &more).unwrap());
    }

    #[test]
    fn p1_below_b_is_a_probability() {
        let e = p1_below_b(&gauss(0.75), &prior(0.01), -2.2, 20_000, 9).unwrap();
        assert!(e.value > 0.0 && e.value < 1.0, "{e:?}");
    }
}
