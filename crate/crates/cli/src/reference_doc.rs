//! Commented listing of every configuration key with its default.

use crate::config::ExperimentConfig;

/// `(section, key, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model", "theta", "post-change mean; f0 = N(0,1), f1 = N(theta,1)"),
    ("prior", "rho", "geometric change-time parameter, in (0,1)"),
    ("prior", "pi0", "probability that the change has happened before time 1"),
    ("policy", "kind", "two_threshold | shiryaev | fractional"),
    ("policy", "a", "log-odds stopping threshold, log(A/(1-A))"),
    ("policy", "b", "log-odds sampling threshold (two_threshold only)"),
    ("policy", "eps", "sampling probability (fractional only)"),
    ("targets", "pfa", "false-alarm constraint for calibrate-a, tradeoff, compare-fractional"),
    ("targets", "ano_percent", "ANO as a percentage of E[Gamma], for calibrate-b and compare-fractional"),
    ("targets", "ano_percent_list", "ANO% targets of the trade-off curves"),
    ("targets", "rho_list", "rho values swept by tradeoff and compare-fractional"),
    ("monte_carlo", "n_trials", "trials per estimate (overridden by --trials)"),
    ("monte_carlo", "master_seed", "root of every random stream (overridden by --seed)"),
    ("monte_carlo", "horizon_cap", "maximum steps per trial; 0 = ceil(20/rho + 40a/(D + |log(1-rho)|))"),
    ("monte_carlo", "pfa_rel_tol", "relative PFA tolerance of threshold calibration"),
    ("monte_carlo", "ano_percent_abs_tol", "absolute ANO% tolerance of b and eps calibration"),
    ("dp", "lambda_f", "false-alarm cost"),
    ("dp", "lambda_e", "cost per observation taken"),
    ("dp", "grid_size", "points on the uniform grid over [0,1]"),
    ("dp", "iters", "maximum value-iteration sweeps"),
    ("dp", "quad_nodes", "Gauss-Legendre nodes for the observation integral"),
    ("dp", "tol", "sup-norm stopping tolerance; 0 runs every sweep"),
    ("approx", "n_crossings", "overshoot samples"),
    ("approx", "wall_multiple", "overshoot wall height in units of the post-change drift"),
    ("approx", "n_eta_paths", "paths for the eta limit"),
    ("approx", "eta_truncation_k", "series length for eta; 0 = smallest k with (1-rho)^k < 1e-6"),
    ("approx", "n_p1_paths", "paths for the probability of dropping below b after the change"),
    ("approx", "seed", "seed of the approximation oracles (overridden by --seed)"),
    ("replicate", "pfa_trials", "trials per row of the fixed-threshold PFA block"),
    ("replicate", "sweep_trials", "trials per b of the PFA b-sweep block"),
    ("replicate", "row_trials", "trials per row of the ANO / delay block"),
    ("replicate", "delay_trials", "trials per row of the cycle-based delay blocks"),
    ("replicate", "small_rho_trials", "used instead of delay_trials when rho < 1e-3"),
    ("output", "dir", "directory for CSV and JSON output (overridden by --out)"),
];

fn doc(section: &str, key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(s, k, _)| *s == section && *k == key).map(|(_, _, d)| *d)
}

/// The default configuration as TOML, each key preceded by its description.
pub fn render(cfg: &ExperimentConfig) -> String {
    let mut out = String::from("# qcd configuration reference: every key, with its default.\n");
    let mut section = String::new();
    for line in cfg.to_toml().lines() {
        let t = line.trim();
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').to_string();
            out.push('\n');
        } else if let Some((key, _)) = t.split_once(" = ") {
            if let Some(d) = doc(&section, key) {
                out.push_str(&format!("# {d}\n"));
            }
        }
        if !t.is_empty() {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_documented() {
        let text = ExperimentConfig::default().to_toml();
        let mut section = String::new();
        let mut n = 0;
        for line in text.lines() {
            let t = line.trim();
            if t.starts_with('[') {
                section = t.trim_matches(|c| c == '[' || c == ']').to_string();
            } else if let Some((key, _)) = t.split_once(" = ") {
                assert!(doc(&section, key).is_some(), "{section}.{key} undocumented");
                n += 1;
            }
        }
        assert_eq!(n, KEYS.len());
    }

    #[test]
    fn rendered_reference_parses_to_defaults() {
        let text = render(&ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), ExperimentConfig::default());
    }
}
