//! Posterior recursions in probability and log-odds form.
//!
//! The log-odds statistic `Z = log(p/(1−p))` is the representation used by
//! the simulators: `1 − p = 1/(1+e^Z)` stays accurate when `p` is within
//! machine epsilon of one, which is exactly where false-alarm probabilities
//! of order `e^{−a}` live. The probability form is kept for the dynamic
//! program and for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ObservationModel;

/// `log(e^a + e^b)` without overflow; handles infinite arguments.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(p/(1−p))`, with `0 ↦ −∞` and `1 ↦ +∞`.
#[inline]
pub fn logit(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        (p / (1.0 - p)).ln()
    }
}

/// Inverse of [`logit`].
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `1 − logistic(z)` computed without cancellation.
#[inline]
pub fn one_minus_logistic(z: f64) -> f64 {
    logistic(-z)
}

/// Posterior probability of the change together with its log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    p: f64,
    z: f64,
}

impl BeliefState {
    pub fn from_p(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", format!("must lie in [0,1], got {p}")));
        }
        Ok(Self { p, z: logit(p) })
    }

    /// Accepts `z ∈ [−∞, +∞]`; `+∞` is the absorbing state `p = 1`.
    pub fn from_z(z: f64) -> Result<Self> {
        if z.is_nan() {
            return Err(invalid("z", "must not be NaN"));
        }
        Ok(Self { p: logistic(z), z })
    }

    /// The prior state `p₀ = 0`.
    pub fn start() -> Self {
        Self {
            p: 0.0,
            z: f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub(crate) fn from_z_unchecked(z: f64) -> Self {
        Self { p: logistic(z), z }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// `1 − p`, accurate when `p` is close to one.
    pub fn one_minus_p(&self) -> f64 {
        one_minus_logistic(self.z)
    }
}

/// Stopping threshold `A` and sampling threshold `B < A`, with their log-odds images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    upper: f64,
    lower: f64,
    a: f64,
    b: f64,
}

impl ThresholdPair {
    /// From probabilities `A ∈ (0,1)` and `B ∈ [0, A)`.
    pub fn from_probabilities(upper: f64, lower: f64) -> Result<Self> {
        if !(upper > 0.0 && upper < 1.0) {
            return Err(invalid("A", format!("must lie in (0,1), got {upper}")));
        }
        if !(lower >= 0.0 && lower < upper) {
            return Err(invalid("B", format!("must satisfy 0 <= B < A = {upper}, got {lower}")));
        }
        Ok(Self {
            upper,
            lower,
            a: logit(upper),
            b: logit(lower),
        })
    }

    /// From log-odds thresholds `b < a`; `b = −∞` means `B = 0`.
    pub fn from_log_odds(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(invalid("a", format!("must be finite, got {a}")));
        }
        if b.is_nan() || b >= a {
            return Err(invalid("b", format!("must satisfy b < a = {a}, got {b}")));
        }
        Ok(Self {
            upper: logistic(a),
            lower: logistic(b),
            a,
            b,
        })
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// `Φ⁽⁰⁾(p) = p + (1−p)ρ`: the update when the next sample is skipped.
#[inline]
pub fn phi_skip(p: f64, rho: f64) -> f64 {
    p + (1.0 - p) * rho
}

/// `Φ⁽¹⁾(x, p)`: Bayes update of `Φ⁽⁰⁾(p)` by the likelihood ratio of `x`.
pub fn phi_take<M: ObservationModel>(x: f64, p: f64, rho: f64, model: &M) -> f64 {
    let q = phi_skip(p, rho);
    if q >= 1.0 {
        return 1.0;
    }
    let l = model.log_lr(x).exp();
    if l.is_infinite() {
        return 1.0;
    }
    q * l / (q * l + (1.0 - q))
}

/// Precomputed constants of the log-odds recursion for one `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOddsDynamics {
    rho: f64,
    ln_rho: f64,
    drift: f64,
}

impl LogOddsDynamics {
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            ln_rho: rho.ln(),
            drift: -(-rho).ln_1p(),
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `|log(1−ρ)|`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// `log(e^z + ρ) + |log(1−ρ)|`, which equals `z + |log(1−ρ)| + log(1+ρe^{−z})`
    /// and is well defined at `z = −∞`.
    #[inline]
    pub fn skip(&self, z: f64) -> f64 {
        log_add_exp(z, self.ln_rho) + self.drift
    }

    #[inline]
    pub fn take(&self, z: f64, log_lr: f64) -> f64 {
        self.skip(z) + log_lr
    }
}

pub fn z_skip(z: f64, rho: f64) -> f64 {
    LogOddsDynamics::new(rho).skip(z)
}

pub fn z_take<M: ObservationModel>(x: f64, z: f64, rho: f64, model: &M) -> f64 {
    LogOddsDynamics::new(rho).take(z, model.log_lr(x))
}

/// Number of skip-only steps for the log-odds to climb from `x` strictly above `y`,
/// by direct iteration of the recursion.
pub fn t_exact(x: f64, y: f64, rho: f64) -> u64 {
    let dyn_ = LogOddsDynamics::new(rho);
    let mut z = x;
    let mut k = 0u64;
    while z <= y {
        z = dyn_.skip(z);
        k += 1;
    }
    k
}

#[inline]
fn log1p_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Continuous approximation `(log(1+e^y) − log(1+e^x)) / |log(1−ρ)|`.
pub fn t_closed_form(x: f64, y: f64, rho: f64) -> f64 {
    let drift = -(-rho).ln_1p();
    (log1p_exp(y) - log1p_exp(x)) / drift
}

/// Bracket `[lower, upper]` containing [`t_exact`] for `x ≤ y`.
///
/// From `e^{Z_k} + 1 = (e^x + 1)/(1−ρ)^k` and `y < Z_t ≤ y + |log(1−ρ)| + log(1+ρe^{−y})`.
pub fn t_bounds(x: f64, y: f64, rho: f64) -> (f64, f64) {
    let drift = -(-rho).ln_1p();
    let base = log1p_exp(x);
    let lower = (log1p_exp(y) - base) / drift;
    // log(1 + (e^y + ρ)/(1−ρ))
    let top = log1p_exp(log_add_exp(y, rho.ln()) + drift);
    let upper = (top - base) / drift;
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianMeanShift;
    use proptest::prelude::*;

    fn gauss(theta: f64) -> GaussianMeanShift {
        GaussianMeanShift::new(theta).unwrap()
    }

    #[test]
    fn phi_skip_examples() {
        assert!((phi_skip(0.0, 0.01) - 0.01).abs() < 1e-15);
        assert_eq!(phi_skip(1.0, 0.3), 1.0);
        assert!((phi_skip(0.2, 0.05) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn phi_take_examples() {
        let m = gauss(0.75);
        for p in [0.0, 0.1, 0.5, 0.93] {
            assert!((phi_take(0.375, p, 0.01, &m) - phi_skip(p, 0.01)).abs() < 1e-15);
        }
        assert_eq!(phi_take(-3.0, 1.0, 0.01, &m), 1.0);
        assert_eq!(phi_take(4.0, 1.0, 0.2, &m), 1.0);

        let p_route = phi_take(1.0, 0.2, 0.01, &m);
        let z_route = logistic(z_take(1.0, logit(0.2), 0.01, &m));
        assert!((p_route - z_route).abs() < 1e-10, "{p_route} vs {z_route}");
    }

    #[test]
    fn z_skip_examples() {
        let z1 = z_skip(f64::NEG_INFINITY, 0.01);
        assert!((z1 - (0.01f64 / 0.99).ln()).abs() < 1e-12);
        assert!((z1 + 4.59512).abs() < 1e-5);

        let z = z_skip(0.0, 0.05);
        assert!((z.exp() + 1.0 - 2.0 / 0.95).abs() < 1e-12);

        let mut z = -4.59512;
        for _ in 0..100 {
            let next = z_skip(z, 0.01);
            assert!(next > z);
            z = next;
        }
        assert_eq!(z_skip(f64::INFINITY, 0.3), f64::INFINITY);
    }

    #[test]
    fn z_take_examples() {
        let m = gauss(0.75);
        for z in [-5.0, 0.0, 3.0] {
            assert_eq!(z_take(0.375, z, 0.01, &m), z_skip(z, 0.01));
        }
        assert_eq!(z_take(0.375, 0.0, 0.01, &m), z_skip(0.0, 0.01));
    }

    #[test]
    fn z_take_matches_probability_route_on_random_pairs() {
        use rand::Rng;
        let m = gauss(0.75);
        let mut rng = crate::rng::child_rng(1, 2, 3);
        for _ in 0..10_000 {
            let z: f64 = rng.random_range(-20.0..20.0);
            let x: f64 = rng.random_range(-4.0..5.0);
            let p = logistic(z);
            let via_p = logit(phi_take(x, p, 0.01, &m));
            let via_z = z_take(x, z, 0.01, &m);
            // The probability route loses ~1e-16/(1−q) in log-odds, so compare
            // log-odds only away from the boundaries.
            let q = phi_take(x, p, 0.01, &m);
            if q > 1e-4 && q < 1.0 - 1e-4 {
                assert!((via_p - via_z).abs() < 1e-9, "z={z} x={x}: {via_p} vs {via_z}");
            } else {
                assert!((q - logistic(via_z)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn t_exact_examples() {
        assert_eq!(t_exact(1.1, 1.0, 0.01), 0);
        // e^{Z_k}+1 = 2·2^k for rho=1/2 from z=0, so e^{Z_7} = 255 is the first above e^5.
        let k = t_exact(0.0, 5.0, 0.5);
        assert_eq!(k, 7);
        assert!(2.0 * 2f64.powi(7) - 1.0 > 5f64.exp());
        assert!(2.0 * 2f64.powi(6) - 1.0 <= 5f64.exp());

        let y = -1.386294;
        let t = t_exact(f64::NEG_INFINITY, y, 0.01);
        let (lo, hi) = t_bounds(f64::NEG_INFINITY, y, 0.01);
        assert!(lo <= t as f64 && t as f64 <= hi, "{lo} <= {t} <= {hi}");
    }

    #[test]
    fn t_closed_form_examples() {
        assert_eq!(t_closed_form(0.7, 0.7, 0.02), 0.0);
        // B = 0.2: 1 + e^y = 1/(1−B) = 1.25.
        let t = t_closed_form(f64::NEG_INFINITY, -1.386294, 0.01);
        assert!((t - 1.25f64.ln() / 0.99f64.ln().abs()).abs() < 1e-5, "{t}");
        assert!((t - 22.20).abs() < 0.01, "{t}");
    }

    #[test]
    fn threshold_pair_mapping() {
        let t = ThresholdPair::from_probabilities(0.98, 0.2).unwrap();
        assert!((t.a() - (0.98f64 / 0.02).ln()).abs() < 1e-12);
        assert!((t.b() - (0.2f64 / 0.8).ln()).abs() < 1e-12);
        let s = ThresholdPair::from_probabilities(0.98, 0.0).unwrap();
        assert_eq!(s.b(), f64::NEG_INFINITY);
        let back = ThresholdPair::from_log_odds(t.a(), t.b()).unwrap();
        assert!((back.upper() - 0.98).abs() < 1e-14 && (back.lower() - 0.2).abs() < 1e-14);
        assert!(ThresholdPair::from_probabilities(0.5, 0.5).is_err());
        assert!(ThresholdPair::from_log_odds(1.0, 2.0).is_err());
        assert!(ThresholdPair::from_log_odds(1.0, f64::NEG_INFINITY).is_ok());
    }

    #[test]
    fn belief_state_sentinels() {
        let s = BeliefState::from_p(0.0).unwrap();
        assert_eq!(s.z(), f64::NEG_INFINITY);
        let one = BeliefState::from_p(1.0).unwrap();
        assert_eq!(one.z(), f64::INFINITY);
        assert_eq!(one.one_minus_p(), 0.0);
        assert!(BeliefState::from_p(1.5).is_err());
        assert!(BeliefState::from_z(f64::NAN).is_err());
        // 1-p stays accurate far beyond where p rounds to one.
        let far = BeliefState::from_z(60.0).unwrap();
        assert_eq!(far.p(), 1.0);
        assert!((far.one_minus_p() / (-60f64).exp() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn p_z_round_trip(p in 1e-9f64..(1.0 - 1e-9)) {
            let s = BeliefState::from_p(p).unwrap();
            let back = BeliefState::from_z(s.z()).unwrap();
            prop_assert!((back.p() - p).abs() < 1e-12);
        }

        #[test]
        fn skip_is_monotone(p in 0.0f64..=1.0, rho in 1e-4f64..0.9, z in -50.0f64..50.0) {
            prop_assert!(phi_skip(p, rho) >= p);
            prop_assert!(phi_skip(p, rho) >= rho - 1e-15);
            prop_assert!(z_skip(z, rho) > z);
        }

        #[test]
        fn geometric_skip_identity(z0 in -10.0f64..5.0, rho in 1e-4f64..0.05, k in 1usize..10_000) {
            let d = LogOddsDynamics::new(rho);
            let mut z = z0;
            for _ in 0..k {
                z = d.skip(z);
            }
            // log(e^{Z_k}+1) = log(e^{z0}+1) + k|log(1-rho)|
            let lhs = log1p_exp(z);
            let rhs = log1p_exp(z0) + k as f64 * d.drift();
            prop_assert!(((lhs - rhs) / rhs.abs().max(1.0)).abs() < 1e-10, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn domain_equivalence_along_mixed_paths(
            z0 in -8.0f64..8.0,
            steps in proptest::collection::vec((any::<bool>(), -3.0f64..4.0), 1..60),
        ) {
            let m = gauss(0.75);
            let rho = 0.01;
            let d = LogOddsDynamics::new(rho);
            let (mut z, mut p) = (z0, logistic(z0));
            for (take, x) in steps {
                if take {
                    z = d.take(z, m.log_lr(x));
                    p = phi_take(x, p, rho, &m);
                } else {
                    z = d.skip(z);
                    p = phi_skip(p, rho);
                }
                if !(1e-12..=1.0 - 1e-12).contains(&p) {
                    break;
                }
                prop_assert!((logistic(z) - p).abs() < 1e-9);
            }
        }

        #[test]
        fn t_exact_within_bracket(x in -15.0f64..3.0, gap in 0.0f64..8.0, rho in 1e-3f64..0.3) {
            let y = x + gap;
            let t = t_exact(x, y, rho) as f64;
            let (lo, hi) = t_bounds(x, y, rho);
            prop_assert!(lo <= t + 1e-9 && t <= hi + 1e-9, "{} <= {} <= {}", lo, t, hi);
        }

        #[test]
        fn closed_form_tracks_iteration(x in -10.0f64..2.0, gap in 0.0f64..6.0, rho in 1e-4f64..0.05) {
            let y = x + gap;
            let t = t_exact(x, y, rho) as f64;
            let c = t_closed_form(x, y, rho);
            prop_assert!((c - t).abs() <= 1.0 + rho * t);
        }
    }
}
