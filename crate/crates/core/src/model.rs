//! Change-point prior, observation densities and scenario sampling.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcdError, Result};
use crate::rng::{self, stream};

/// Geometric law of the change time: `P{Γ=0} = π₀`, `P{Γ=k} = (1−π₀)ρ(1−ρ)^{k−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricPrior {
    rho: f64,
    pi0: f64,
}

impl GeometricPrior {
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_pi0(rho, 0.0)
    }

    pub fn with_pi0(rho: f64, pi0: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid("rho", format!("must lie in (0,1), got {rho}")));
        }
        if !(0.0..1.0).contains(&pi0) {
            return Err(invalid("pi0", format!("must lie in [0,1), got {pi0}")));
        }
        Ok(Self { rho, pi0 })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    /// `|log(1−ρ)|`, the deterministic per-step drift of the log-odds.
    pub fn skip_drift(&self) -> f64 {
        -(-self.rho).ln_1p()
    }

    pub fn mean_change_time(&self) -> f64 {
        (1.0 - self.pi0) / self.rho
    }
}

/// Pre- and post-change observation laws.
pub trait ObservationModel: Copy + Send + Sync + std::fmt::Debug {
    fn sample_pre<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    fn sample_post<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    /// `log f₁(x)/f₀(x)` without input validation.
    fn log_lr(&self, x: f64) -> f64;
    /// `D(f₁‖f₀)`.
    fn kl_post_pre(&self) -> f64;
    /// `D(f₀‖f₁)`.
    fn kl_pre_post(&self) -> f64;
    fn density_pre(&self, x: f64) -> f64;
    fn density_post(&self, x: f64) -> f64;
    /// Interval carrying essentially all mass of both densities.
    fn quadrature_support(&self) -> (f64, f64);
}

/// `f₀ = N(0,1)`, `f₁ = N(θ,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeanShift {
    theta: f64,
}

impl GaussianMeanShift {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(invalid("theta", format!("must be finite and > 0, got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The point where `f₀ = f₁`.
    pub fn symmetry_point(&self) -> f64 {
        self.theta / 2.0
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl ObservationModel for GaussianMeanShift {
    #[inline]
    fn sample_pre<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn sample_post<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.theta + z
    }

    #[inline]
    fn log_lr(&self, x: f64) -> f64 {
        self.theta * x - 0.5 * self.theta * self.theta
    }

    fn kl_post_pre(&self) -> f64 {
        0.5 * self.theta * self.theta
    }

    fn kl_pre_post(&self) -> f64 {
        0.5 * self.theta * self.theta
    }

    fn density_pre(&self, x: f64) -> f64 {
        INV_SQRT_2PI * (-0.5 * x * x).exp()
    }

    fn density_post(&self, x: f64) -> f64 {
        let d = x - self.theta;
        INV_SQRT_2PI * (-0.5 * d * d).exp()
    }

    fn quadrature_support(&self) -> (f64, f64) {
        let mid = self.symmetry_point();
        (mid - 8.0, mid + 8.0)
    }
}

/// Checked log-likelihood ratio.
pub fn log_lr<M: ObservationModel>(model: &M, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(QcdError::Domain(format!("observation must be finite, got {x}")));
    }
    Ok(model.log_lr(x))
}

pub fn kl_divergence<M: ObservationModel>(model: &M) -> f64 {
    model.kl_post_pre()
}

/// Draws Γ from the prior. Γ=0 means the change precedes the first observation.
pub fn sample_change_time<R: Rng + ?Sized>(prior: &GeometricPrior, rng: &mut R) -> u64 {
    if prior.pi0 > 0.0 && rng.random::<f64>() < prior.pi0 {
        return 0;
    }
    // Geometric counts failures before the first success.
    let failures = Geometric::new(prior.rho)
        .expect("rho validated at construction")
        .sample(rng);
    failures.saturating_add(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Pre,
    Post,
}

/// Mean of the increment `Y = log L(X) + |log(1−ρ)|` under `f₀` or `f₁`.
pub fn y_drift<M: ObservationModel>(model: &M, prior: &GeometricPrior, regime: Regime) -> f64 {
    match regime {
        Regime::Post => model.kl_post_pre() + prior.skip_drift(),
        Regime::Pre => -model.kl_pre_post() + prior.skip_drift(),
    }
}

/// When the observation law switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeTime {
    At(u64),
    /// The whole sequence is drawn from `f₀`.
    Never,
}

impl ChangeTime {
    #[inline]
    pub fn is_post(&self, k: u64) -> bool {
        match *self {
            ChangeTime::At(gamma) => k >= gamma,
            ChangeTime::Never => false,
        }
    }
}

/// One realization of the change time and the observation sequence.
///
/// `X_k` is a pure function of `(seed, k)`, so observations can be pulled
/// lazily in any order and skipped samples are never generated.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<M> {
    model: M,
    change: ChangeTime,
    obs_key: u64,
}

impl<M: ObservationModel> Scenario<M> {
    pub fn new(model: M, prior: &GeometricPrior, seed: u64) -> Self {
        let mut rng = rng::child_rng(seed, stream::CHANGE_TIME, 0);
        let gamma = sample_change_time(prior, &mut rng);
        Self::with_change(model, ChangeTime::At(gamma), seed)
    }

    pub fn with_change(model: M, change: ChangeTime, seed: u64) -> Self {
        Self {
            model,
            change,
            obs_key: rng::derive_seed(seed, stream::OBSERVATIONS, 0),
        }
    }

    pub fn change_time(&self) -> ChangeTime {
        self.change
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// `X_k` for `k ≥ 1`: drawn from `f₀` before Γ and from `f₁` from Γ on.
    #[inline]
    pub fn observation(&self, k: u64) -> f64 {
        let mut rng = rng::child_rng(self.obs_key, stream::OBSERVATIONS, k);
        if self.change.is_post(k) {
            self.model.sample_post(&mut rng)
        } else {
            self.model.sample_pre(&mut rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(theta: f64) -> GaussianMeanShift {
        GaussianMeanShift::new(theta).unwrap()
    }

    #[test]
    fn log_lr_examples() {
        assert_eq!(log_lr(&gauss(0.75), 0.375).unwrap(), 0.0);
        assert!((log_lr(&gauss(0.75), 0.0).unwrap() + 0.28125).abs() < 1e-15);
        assert_eq!(log_lr(&gauss(2.0), 1.0).unwrap(), 0.0);
        assert!(matches!(log_lr(&gauss(1.0), f64::NAN), Err(QcdError::Domain(_))));
        assert!(log_lr(&gauss(1.0), f64::INFINITY).is_err());
    }

    #[test]
    fn kl_examples() {
        assert!((kl_divergence(&gauss(0.75)) - 0.28125).abs() < 1e-15);
        assert!((kl_divergence(&gauss(0.4)) - 0.08).abs() < 1e-15);
        assert!((kl_divergence(&gauss(2.0)) - 2.0).abs() < 1e-15);
        assert_eq!(gauss(0.9).kl_pre_post(), gauss(0.9).kl_post_pre());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianMeanShift::new(0.0).is_err());
        assert!(GaussianMeanShift::new(f64::NAN).is_err());
        assert!(GeometricPrior::new(0.0).is_err());
        assert!(GeometricPrior::new(1.0).is_err());
        assert!(GeometricPrior::with_pi0(0.1, 1.0).is_err());
        assert!(GeometricPrior::with_pi0(0.1, -0.1).is_err());
    }

    #[test]
    fn mean_change_time() {
        assert!((GeometricPrior::new(0.01).unwrap().mean_change_time() - 100.0).abs() < 1e-12);
        let p = GeometricPrior::with_pi0(0.05, 0.2).unwrap();
        assert!((p.mean_change_time() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn y_drift_examples() {
        let p01 = GeometricPrior::new(0.01).unwrap();
        let post = y_drift(&gauss(0.75), &p01, Regime::Post);
        assert!((post - 0.291_300_335_9).abs() < 1e-9, "{post}");
        let pre = y_drift(&gauss(0.75), &p01, Regime::Pre);
        assert!((pre + 0.271_199_664_1).abs() < 1e-9, "{pre}");
        let p05 = GeometricPrior::new(0.05).unwrap();
        let post = y_drift(&gauss(0.4), &p05, Regime::Post);
        assert!((post - 0.131_293_294_9).abs() < 1e-9, "{post}");
    }

    #[test]
    fn degenerate_prior_pi0_near_one_is_mostly_zero() {
        // pi0 must stay below 1; at 0.999999 virtually every draw is Γ=0.
        let prior = GeometricPrior::with_pi0(0.3, 0.999_999).unwrap();
        let mut rng = rng::child_rng(5, 0, 0);
        let zeros = (0..10_000)
            .filter(|_| sample_change_time(&prior, &mut rng) == 0)
            .count();
        assert!(zeros >= 9_990);
    }

    #[test]
    fn change_time_law() {
        let prior = GeometricPrior::new(0.01).unwrap();
        let mut rng = rng::child_rng(11, 0, 0);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_change_time(&prior, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 100.0).abs() < 0.3, "{mean}");

        let prior = GeometricPrior::new(0.05).unwrap();
        let ones = (0..n)
            .filter(|_| sample_change_time(&prior, &mut rng) == 1)
            .count() as f64
            / n as f64;
        assert!((ones - 0.05).abs() < 0.001, "{ones}");
    }

    #[test]
    fn log_lr_means_match_divergences() {
        let m = gauss(0.75);
        let mut rng = rng::child_rng(3, 0, 0);
        let n = 1_000_000;
        for (regime, expect) in [(Regime::Post, 0.28125), (Regime::Pre, -0.28125)] {
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = match regime {
                    Regime::Post => m.sample_post(&mut rng),
                    Regime::Pre => m.sample_pre(&mut rng),
                };
                let l = m.log_lr(x);
                s += l;
                s2 += l * l;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((mean - expect).abs() < 3.0 * se, "{regime:?}: {mean} vs {expect}");
        }
    }

    #[test]
    fn scenario_is_reproducible_and_switches_at_gamma() {
        let m = gauss(1.0);
        let prior = GeometricPrior::new(0.1).unwrap();
        let a = Scenario::new(m, &prior, 42);
        let b = Scenario::new(m, &prior, 42);
        assert_eq!(a.change_time(), b.change_time());
        // Access order must not matter.
        let fwd: Vec<f64> = (1..50).map(|k| a.observation(k)).collect();
        let rev: Vec<f64> = (1..50).rev().map(|k| b.observation(k)).collect();
        assert!(fwd.iter().eq(rev.iter().rev()));

        let c = Scenario::with_change(m, ChangeTime::At(5), 9);
        let d = Scenario::with_change(m, ChangeTime::Never, 9);
        for k in 1..5 {
            assert_eq!(c.observation(k), d.observation(k));
        }
        // Same underlying normal draw, shifted by theta after the change.
        for k in 5..20 {
            assert!((c.observation(k) - d.observation(k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_integrate_to_one_on_support() {
        let m = gauss(0.75);
        let (lo, hi) = m.quadrature_support();
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let (mut s0, mut s1) = (0.0, 0.0);
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            s0 += m.density_pre(x) * h;
            s1 += m.density_post(x) * h;
        }
        assert!((s0 - 1.0).abs() < 1e-9 && (s1 - 1.0).abs() < 1e-9);
    }
}
