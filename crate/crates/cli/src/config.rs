//! Experiment configuration: one TOML file with sections, every key optional.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qcd_core::asymptotics::ApproxSettings;
use qcd_core::bellman::{CostParams, SolverSettings};
use qcd_core::model::{GaussianMeanShift, GeometricPrior};
use qcd_core::montecarlo::{CalibrationTolerances, McSettings, SimOptions};
use qcd_core::policy::PolicySpec;
use qcd_core::{QcdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub policy: PolicyConfig,
    pub targets: TargetConfig,
    pub monte_carlo: MonteCarloConfig,
    pub dp: DpConfig,
    pub approx: ApproxConfig,
    pub replicate: ReplicateConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Post-change mean of `N(θ, 1)`; pre-change is `N(0, 1)`.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub rho: f64,
    pub pi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    TwoThreshold,
    Shiryaev,
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Log-odds stopping threshold `a = log(A/(1−A))`.
    pub a: f64,
    /// Log-odds sampling threshold `b`; ignored unless `kind = "two_threshold"`.
    pub b: f64,
    /// Sampling probability; used when `kind = "fractional"`.
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// PFA constraint `α`.
    pub pfa: f64,
    /// ANO constraint `β`, as a percentage of `E[Γ]`.
    pub ano_percent: f64,
    pub ano_percent_list: Vec<f64>,
    pub rho_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_trials: u64,
    pub master_seed: u64,
    /// 0 selects the default cap derived from `a`, `θ` and `ρ`.
    pub horizon_cap: u64,
    pub pfa_rel_tol: f64,
    pub ano_percent_abs_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub lambda_f: f64,
    pub lambda_e: f64,
    pub grid_size: usize,
    pub iters: usize,
    pub quad_nodes: usize,
    /// Sup-norm stopping tolerance; 0 runs all `iters` sweeps.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub n_crossings: usize,
    pub wall_multiple: f64,
    pub n_eta_paths: usize,
    /// 0 selects the smallest `k` with `(1−ρ)^k < 1e−6`.
    pub eta_truncation_k: u64,
    pub n_p1_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub pfa_trials: u64,
    pub sweep_trials: u64,
    pub row_trials: u64,
    pub delay_trials: u64,
    /// Used instead of `delay_trials` when `ρ < 10⁻³`.
    pub small_rho_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { theta: 0.75 }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { rho: 0.01, pi0: 0.0 }
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::TwoThreshold,
            a: 6.467,
            b: -2.2,
            eps: 0.5,
        }
    }
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            pfa: 1e-3,
            ano_percent: 50.0,
            ano_percent_list: vec![75.0, 50.0, 30.0, 15.0],
            rho_list: vec![0.05, 0.01, 0.005, 0.001],
        }
    }
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        let tol = CalibrationTolerances::default();
        Self {
            n_trials: 100_000,
            master_seed: 1,
            horizon_cap: 0,
            pfa_rel_tol: tol.pfa_rel,
            ano_percent_abs_tol: tol.ano_percent_abs,
        }
    }
}

impl Default for DpConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            lambda_f: 50.0,
            lambda_e: 0.5,
            grid_size: s.grid_size,
            iters: s.max_iters,
            quad_nodes: s.quad_nodes,
            tol: 0.0,
        }
    }
}

impl Default for ApproxConfig {
    fn default() -> Self {
        let s = ApproxSettings::default();
        Self {
            n_crossings: s.n_crossings,
            wall_multiple: s.wall_multiple,
            n_eta_paths: s.n_eta_paths,
            eta_truncation_k: 0,
            n_p1_paths: s.n_p1_paths,
            seed: s.seed,
        }
    }
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            pfa_trials: 1_000_000,
            sweep_trials: 200_000,
            row_trials: 100_000,
            delay_trials: 100_000,
            small_rho_trials: 20_000,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}


fn bad(msg: impl Into<String>) -> QcdError {
    QcdError::Configuration(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the resolved config in canonical TOML form, without the
    /// output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything the constructors in the core crate would reject,
    /// so a bad file fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.prior()?;
        self.policy()?;
        self.costs()?;
        for &rho in &self.targets.rho_list {
            GeometricPrior::new(rho)?;
        }
        let t = &self.targets;
        if !(t.pfa > 0.0 && t.pfa < 1.0) {
            return Err(bad(format!("targets.pfa must lie in (0,1), got {}", t.pfa)));
        }
        for &x in t.ano_percent_list.iter().chain(std::iter::once(&t.ano_percent)) {
            if !(x > 0.0 && x < 100.0) {
                return Err(bad(format!("ANO% targets must lie in (0,100), got {x}")));
            }
        }
        if self.monte_carlo.n_trials == 0 {
            return Err(bad("monte_carlo.n_trials must be positive"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<GaussianMeanShift> {
        GaussianMeanShift::new(self.model.theta)
    }

    pub fn prior(&self) -> Result<GeometricPrior> {
        GeometricPrior::with_pi0(self.prior.rho, self.prior.pi0)
    }

    pub fn policy(&self) -> Result<PolicySpec> {
        let p = &self.policy;
        match p.kind {
            PolicyKind::TwoThreshold => PolicySpec::two_threshold_log_odds(p.a, p.b),
            PolicyKind::Shiryaev => PolicySpec::shiryaev_log_odds(p.a),
            PolicyKind::Fractional => PolicySpec::fractional_log_odds(p.a, p.eps),
        }
    }

    /// The configured `b`, or `None` when the policy never skips on `b`.
    pub fn lower_threshold(&self) -> Option<f64> {
        (self.policy.kind == PolicyKind::TwoThreshold).then_some(self.policy.b)
    }

    pub fn costs(&self) -> Result<CostParams> {
        CostParams::new(self.dp.lambda_f, self.dp.lambda_e)
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            grid_size: self.dp.grid_size,
            max_iters: self.dp.iters,
            quad_nodes: self.dp.quad_nodes,
            tol: self.dp.tol,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            horizon_cap: (self.monte_carlo.horizon_cap > 0).then_some(self.monte_carlo.horizon_cap),
            ..SimOptions::default()
        }
    }

    pub fn mc(&self) -> McSettings {
        McSettings {
            n_trials: self.monte_carlo.n_trials,
            master_seed: self.monte_carlo.master_seed,
            sim: self.sim_options(),
        }
    }

    pub fn tolerances(&self) -> CalibrationTolerances {
        CalibrationTolerances {
            pfa_rel: self.monte_carlo.pfa_rel_tol,
            ano_percent_abs: self.monte_carlo.ano_percent_abs_tol,
        }
    }

    pub fn approx_settings(&self) -> ApproxSettings {
        let a = &self.approx;
        ApproxSettings {
            n_crossings: a.n_crossings,
            wall_multiple: a.wall_multiple,
            n_eta_paths: a.n_eta_paths,
            eta_truncation_k: (a.eta_truncation_k > 0).then_some(a.eta_truncation_k),
            n_p1_paths: a.n_p1_paths,
            seed: a.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.monte_carlo.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("[model]\nmu = 1.0").is_err());
        assert!(ExperimentConfig::from_toml("[prior]\nrho = 1.5").is_err());
        assert!(ExperimentConfig::from_toml("[policy]\na = 1.0\nb = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("[policy]\nkind = \"fractional\"\neps = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("[targets]\npfa = 0.0").is_err());
    }

    #[test]
    fn shiryaev_ignores_b() {
        let c = ExperimentConfig::from_toml("[policy]\nkind = \"shiryaev\"\na = 5.0\nb = 9.0").unwrap();
        assert_eq!(c.lower_threshold(), None);
        assert_eq!(c.policy().unwrap().name(), "shiryaev");
    }
}
