//! Stopping and observation-control policies.
//!
//! A policy looks at the current belief `p_k` and returns the stopping
//! decision `D_k` and the sampling decision `S_{k+1}`. Threshold policies
//! compare log-odds so that they stay exact when `p` rounds to one.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::bellman::ValueGrid;
use crate::error::{invalid, QcdError, Result};
use crate::model::{ObservationModel, Scenario};
use crate::posterior::{logit, BeliefState, LogOddsDynamics, ThresholdPair};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PolicySpec {
    /// Stop when `p > A`; otherwise observe iff `p ≥ B`.
    TwoThreshold(ThresholdPair),
    /// Stop when `p > A`; otherwise always observe.
    Shiryaev { upper: f64, a: f64 },
    /// Stop when `p > A`; otherwise observe with probability `eps`.
    FractionalSampling { upper: f64, a: f64, eps: f64 },
    /// Decision regions of a solved value grid.
    #[serde(skip)]
    TabulatedDp(Arc<ValueGrid>),
}

/// `D_k` and `S_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub stop_now: bool,
    pub take_next: bool,
}

impl Decision {
    const STOP: Decision = Decision {
        stop_now: true,
        take_next: false,
    };

    fn go(take_next: bool) -> Self {
        Decision {
            stop_now: false,
            take_next,
        }
    }
}

fn check_upper(upper: f64) -> Result<()> {
    if upper > 0.0 && upper < 1.0 {
        Ok(())
    } else {
        Err(invalid("A", format!("must lie in (0,1), got {upper}")))
    }
}

impl PolicySpec {
    pub fn two_threshold(upper: f64, lower: f64) -> Result<Self> {
        Ok(Self::TwoThreshold(ThresholdPair::from_probabilities(upper, lower)?))
    }

    pub fn two_threshold_log_odds(a: f64, b: f64) -> Result<Self> {
        Ok(Self::TwoThreshold(ThresholdPair::from_log_odds(a, b)?))
    }

    pub fn shiryaev(upper: f64) -> Result<Self> {
        check_upper(upper)?;
        Ok(Self::Shiryaev {
            upper,
            a: logit(upper),
        })
    }

    pub fn shiryaev_log_odds(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(invalid("a", format!("must be finite, got {a}")));
        }
        Ok(Self::Shiryaev {
            upper: crate::posterior::logistic(a),
            a,
        })
    }

    pub fn fractional(upper: f64, eps: f64) -> Result<Self> {
        check_upper(upper)?;
        Self::fractional_log_odds(logit(upper), eps)
    }

    pub fn fractional_log_odds(a: f64, eps: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(invalid("a", format!("must be finite, got {a}")));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(invalid("eps", format!("must lie in [0,1], got {eps}")));
        }
        Ok(Self::FractionalSampling {
            upper: crate::posterior::logistic(a),
            a,
            eps,
        })
    }

    pub fn tabulated(grid: Arc<ValueGrid>) -> Self {
        Self::TabulatedDp(grid)
    }

    /// Log-odds stopping threshold, when the policy has one.
    pub fn stop_log_odds(&self) -> Option<f64> {
        match self {
            Self::TwoThreshold(t) => Some(t.a()),
            Self::Shiryaev { a, .. } | Self::FractionalSampling { a, .. } => Some(*a),
            Self::TabulatedDp(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TwoThreshold(_) => "two_threshold",
            Self::Shiryaev { .. } => "shiryaev",
            Self::FractionalSampling { .. } => "fractional",
            Self::TabulatedDp(_) => "tabulated_dp",
        }
    }
}

/// Applies the policy to the belief at time `k`.
pub fn decide<R: Rng + ?Sized>(policy: &PolicySpec, state: &BeliefState, rng: &mut R) -> Result<Decision> {
    let z = state.z();
    Ok(match policy {
        PolicySpec::TwoThreshold(t) => {
            if z > t.a() {
                Decision::STOP
            } else {
                Decision::go(z >= t.b())
            }
        }
        PolicySpec::Shiryaev { a, .. } => {
            if z > *a {
                Decision::STOP
            } else {
                Decision::go(true)
            }
        }
        PolicySpec::FractionalSampling { a, eps, .. } => {
            if z > *a {
                Decision::STOP
            } else {
                Decision::go(rng.random::<f64>() < *eps)
            }
        }
        PolicySpec::TabulatedDp(grid) => {
            if grid.is_empty() {
                return Err(QcdError::Configuration("tabulated policy has an empty grid".into()));
            }
            let p = state.p();
            if grid.stop_margin_at(p) <= 0.0 {
                Decision::STOP
            } else {
                Decision::go(grid.take_margin_at(p) >= 0.0)
            }
        }
    })
}

/// Advances the belief from time `k` to `k+1`.
///
/// Returns the new belief, the decision taken at `k`, and whether `X_{k+1}`
/// was consumed. A stop decision leaves the belief unchanged.
pub fn step<M: ObservationModel, R: Rng + ?Sized>(
    policy: &PolicySpec,
    state: &BeliefState,
    scenario: &Scenario<M>,
    k: u64,
    dynamics: &LogOddsDynamics,
    rng: &mut R,
) -> Result<(BeliefState, Decision, bool)> {
    let decision = decide(policy, state, rng)?;
    if decision.stop_now {
        return Ok((*state, decision, false));
    }
    let z = if decision.take_next {
        let x = scenario.observation(k + 1);
        dynamics.take(state.z(), scenario.model().log_lr(x))
    } else {
        dynamics.skip(state.z())
    };
    Ok((BeliefState::from_z_unchecked(z), decision, decision.take_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChangeTime, GaussianMeanShift, GeometricPrior};
    use crate::rng::child_rng;

    fn state(p: f64) -> BeliefState {
        BeliefState::from_p(p).unwrap()
    }

    #[test]
    fn two_threshold_examples() {
        let pol = PolicySpec::two_threshold(0.98, 0.2).unwrap();
        let mut rng = child_rng(0, 0, 0);
        assert!(decide(&pol, &state(0.99), &mut rng).unwrap().stop_now);
        let d = decide(&pol, &state(0.1), &mut rng).unwrap();
        assert!(!d.stop_now && !d.take_next);
        let d = decide(&pol, &state(0.2), &mut rng).unwrap();
        assert!(!d.stop_now && d.take_next);
        let d = decide(&pol, &state(0.98), &mut rng).unwrap();
        assert!(!d.stop_now && d.take_next);
    }

    #[test]
    fn stop_decision_never_takes() {
        let mut rng = child_rng(0, 0, 0);
        for pol in [
            PolicySpec::two_threshold(0.9, 0.1).unwrap(),
            PolicySpec::shiryaev(0.9).unwrap(),
            PolicySpec::fractional(0.9, 1.0).unwrap(),
        ] {
            let d = decide(&pol, &state(0.95), &mut rng).unwrap();
            assert_eq!(d, Decision::STOP);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PolicySpec::fractional(0.9, 1.5).is_err());
        assert!(PolicySpec::shiryaev(1.0).is_err());
        assert!(PolicySpec::two_threshold(0.5, 0.6).is_err());
    }

    #[test]
    fn empty_tabulated_grid_is_a_configuration_error() {
        let grid = ValueGrid {
            p: vec![],
            j: vec![],
            b0: vec![],
            b1: vec![],
            d: vec![],
            costs: crate::bellman::CostParams::new(1.0, 1.0).unwrap(),
            iterations_run: 0,
            sup_norm_delta: 0.0,
            converged: false,
            residuals: vec![],
        };
        let pol = PolicySpec::tabulated(Arc::new(grid));
        let mut rng = child_rng(0, 0, 0);
        assert!(matches!(
            decide(&pol, &state(0.5), &mut rng),
            Err(QcdError::Configuration(_))
        ));
    }

    #[test]
    fn first_step_from_zero_skips_when_b_exceeds_rho() {
        let m = GaussianMeanShift::new(0.75).unwrap();
        let sc = Scenario::with_change(m, ChangeTime::At(50), 9);
        let pol = PolicySpec::two_threshold(0.98, 0.2).unwrap();
        let dynamics = LogOddsDynamics::new(0.01);
        let mut rng = child_rng(1, 1, 1);
        let (s1, d, used) = step(&pol, &BeliefState::start(), &sc, 0, &dynamics, &mut rng).unwrap();
        assert!(!used && !d.take_next);
        assert!((s1.p() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn shiryaev_consumes_every_observation() {
        let m = GaussianMeanShift::new(1.0).unwrap();
        let prior = GeometricPrior::new(0.05).unwrap();
        let sc = Scenario::new(m, &prior, 4);
        let pol = PolicySpec::shiryaev(0.99).unwrap();
        let dynamics = LogOddsDynamics::new(prior.rho());
        let mut rng = child_rng(4, 3, 0);
        let mut s = BeliefState::start();
        for k in 0..10_000 {
            let (next, d, used) = step(&pol, &s, &sc, k, &dynamics, &mut rng).unwrap();
            if d.stop_now {
                assert!(k >= 1);
                return;
            }
            assert!(used);
            s = next;
        }
        panic!("did not stop");
    }

    #[test]
    fn log_odds_increase_outside_sampling_band() {
        let m = GaussianMeanShift::new(0.75).unwrap();
        let sc = Scenario::with_change(m, ChangeTime::Never, 2);
        let pol = PolicySpec::two_threshold_log_odds(4.0, -1.0).unwrap();
        let dynamics = LogOddsDynamics::new(0.01);
        let mut rng = child_rng(0, 0, 0);
        let mut s = BeliefState::start();
        for k in 0..2000 {
            let (next, d, _) = step(&pol, &s, &sc, k, &dynamics, &mut rng).unwrap();
            if d.stop_now {
                break;
            }
            if s.z() < -1.0 {
                assert!(next.z() > s.z());
            }
            s = next;
        }
    }
}
