//! One function per subcommand. Each writes its files and returns the exit status.

use std::sync::Arc;

use serde::Serialize;

use qcd_core::asymptotics::{approx_report, renewal_constants};
use qcd_core::bellman::{extract_structure, value_iterate, GridRow, PolicyStructure};
use qcd_core::montecarlo::{
    calibrate_a, calibrate_b, compare_fractional, estimate_metrics, tradeoff_curve, CalibrationResult,
    MetricsEstimate,
};
use qcd_core::policy::PolicySpec;
use qcd_core::QcdError;

use crate::config::ExperimentConfig;
use crate::output::OutputDir;
use crate::{CliError, Status};

#[derive(Debug, Serialize)]
pub struct MetricsRow {
    pub config_sha256: String,
    pub policy: &'static str,
    pub rho: f64,
    pub theta: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eps: Option<f64>,
    pub n: u64,
    pub add: f64,
    pub add_se: f64,
    pub pfa: f64,
    pub pfa_se: f64,
    pub ano: f64,
    pub ano_se: f64,
    pub ano1: f64,
    pub ano1_se: f64,
    pub ano_percent: f64,
    pub ano_percent_se: f64,
    pub pfa_indicator: f64,
    pub pfa_indicator_se: f64,
    pub add_unconditional: f64,
    pub add_unconditional_se: f64,
    pub truncated_fraction: f64,
}

impl MetricsRow {
    pub fn new(hash: &str, policy: &PolicySpec, theta: f64, m: &MetricsEstimate) -> Self {
        let (b, eps) = match policy {
            PolicySpec::TwoThreshold(t) => (Some(t.b()).filter(|b| b.is_finite()), None),
            PolicySpec::FractionalSampling { eps, .. } => (None, Some(*eps)),
            _ => (None, None),
        };
        Self {
            config_sha256: hash.to_string(),
            policy: policy.name(),
            rho: m.rho,
            theta,
            a: policy.stop_log_odds(),
            b,
            eps,
            n: m.n_trials,
            add: m.add.value,
            add_se: m.add.se,
            pfa: m.pfa.value,
            pfa_se: m.pfa.se,
            ano: m.ano.value,
            ano_se: m.ano.se,
            ano1: m.ano1.value,
            ano1_se: m.ano1.se,
            ano_percent: m.ano_percent(),
            ano_percent_se: m.ano_percent_se(),
            pfa_indicator: m.pfa_indicator.value,
            pfa_indicator_se: m.pfa_indicator.se,
            add_unconditional: m.add_unconditional.value,
            add_unconditional_se: m.add_unconditional.se,
            truncated_fraction: m.truncated_fraction,
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationRow {
    config_sha256: String,
    parameter: &'static str,
    target: f64,
    threshold: f64,
    threshold_probability: f64,
    achieved: f64,
    achieved_se: f64,
    iterations: usize,
    within_tolerance: bool,
    add: f64,
    add_se: f64,
    pfa: f64,
    pfa_se: f64,
    ano_percent: f64,
    truncated_fraction: f64,
}

fn metrics_status(m: &MetricsEstimate) -> Status {
    match &m.warning {
        Some(w) => {
            eprintln!("warning: {w}");
            Status::Truncation
        }
        None => Status::Ok,
    }
}

pub fn bellman(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "bellman")?;
    let grid = value_iterate(&cfg.model()?, &cfg.prior()?, cfg.costs()?, cfg.solver())?;
    let rows: Vec<GridRow> = grid.rows().collect();
    let csv = out.csv("bellman_grid.csv", &rows)?;

    #[derive(Serialize)]
    struct Summary {
        iterations_run: usize,
        sup_norm_delta: f64,
        converged: bool,
        structure: Option<PolicyStructure>,
        error: Option<String>,
    }
    let structure = extract_structure(&grid);
    let summary = Summary {
        iterations_run: grid.iterations_run,
        sup_norm_delta: grid.sup_norm_delta,
        converged: grid.converged,
        structure: structure.as_ref().ok().cloned(),
        error: structure.as_ref().err().map(|e| e.to_string()),
    };
    let json = out.json("bellman_structure.json", cfg, &summary)?;
    println!("grid: {}", csv.display());
    println!("structure: {}", json.display());
    let s = structure?;
    println!(
        "{:?}: A={:.4} B={} C={} after {} sweeps (delta {:.2e})",
        s.classification,
        s.stop_threshold,
        s.lower_threshold.map_or("-".into(), |b| format!("{b:.4}")),
        s.upper_intersection.map_or("-".into(), |c| format!("{c:.4}")),
        grid.iterations_run,
        grid.sup_norm_delta
    );
    Ok(Status::Ok)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "simulate")?;
    let policy = cfg.policy()?;
    let m = estimate_metrics(
        &policy,
        &cfg.model()?,
        &cfg.prior()?,
        cfg.monte_carlo.n_trials,
        cfg.monte_carlo.master_seed,
        &cfg.sim_options(),
    )?;
    let row = MetricsRow::new(out.hash(), &policy, cfg.model.theta, &m);
    out.csv("simulate.csv", std::slice::from_ref(&row))?;
    out.json("simulate.json", cfg, &m)?;
    println!(
        "{}: ADD {:.4} ± {:.4}  PFA {:.4e} ± {:.1e}  ANO {:.3} ({:.2}%)  ANO1 {:.3}  n={}",
        policy.name(),
        m.add.value,
        m.add.se,
        m.pfa.value,
        m.pfa.se,
        m.ano.value,
        m.ano_percent(),
        m.ano1.value,
        m.n_trials
    );
    Ok(metrics_status(&m))
}

fn write_calibration(
    cfg: &ExperimentConfig,
    out: &OutputDir,
    stem: &str,
    parameter: &'static str,
    cal: &CalibrationResult,
) -> Result<Status, CliError> {
    let m = &cal.metrics;
    let row = CalibrationRow {
        config_sha256: out.hash().to_string(),
        parameter,
        target: cal.target,
        threshold: cal.threshold,
        threshold_probability: cal.threshold_probability,
        achieved: cal.achieved,
        achieved_se: cal.achieved_se,
        iterations: cal.iterations,
        within_tolerance: cal.within_tolerance,
        add: m.add.value,
        add_se: m.add.se,
        pfa: m.pfa.value,
        pfa_se: m.pfa.se,
        ano_percent: m.ano_percent(),
        truncated_fraction: m.truncated_fraction,
    };
    out.csv(&format!("{stem}.csv"), std::slice::from_ref(&row))?;
    out.json(&format!("{stem}.json"), cfg, cal)?;
    println!(
        "{parameter} = {:.6} (p = {:.6}): achieved {:.4e} ± {:.1e} for target {:.4e} after {} evaluations",
        cal.threshold, cal.threshold_probability, cal.achieved, cal.achieved_se, cal.target, cal.iterations
    );
    if !cal.within_tolerance {
        eprintln!("calibration did not reach the tolerance; reporting the closest point");
        return Ok(Status::Calibration);
    }
    Ok(metrics_status(m))
}

pub fn calibrate_a_cmd(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "calibrate-a")?;
    let cal = calibrate_a(
        cfg.targets.pfa,
        cfg.lower_threshold(),
        &cfg.model()?,
        &cfg.prior()?,
        &cfg.mc(),
        cfg.monte_carlo.pfa_rel_tol,
    )?;
    write_calibration(cfg, &out, "calibrate_a", "a", &cal)
}

pub fn calibrate_b_cmd(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "calibrate-b")?;
    let cal = calibrate_b(
        cfg.targets.ano_percent,
        cfg.policy.a,
        &cfg.model()?,
        &cfg.prior()?,
        &cfg.mc(),
        cfg.monte_carlo.ano_percent_abs_tol,
    )?;
    write_calibration(cfg, &out, "calibrate_b", "b", &cal)
}

pub fn tradeoff(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "tradeoff")?;
    let pts = tradeoff_curve(
        &cfg.model()?,
        &cfg.targets.rho_list,
        cfg.targets.pfa,
        &cfg.targets.ano_percent_list,
        &cfg.mc(),
        cfg.tolerances(),
    )?;
    out.csv("tradeoff.csv", &pts)?;
    out.json("tradeoff.json", cfg, &pts)?;
    println!("{:>8} {:>6} {:>8} {:>8} {:>8} {:>9} {:>7}", "rho", "ANO%", "a", "b", "ADD", "Shiryaev", "ratio");
    for p in &pts {
        println!(
            "{:>8} {:>6.1} {:>8.3} {:>8.3} {:>8.2} {:>9.2} {:>7.3}{}",
            p.rho,
            p.ano_percent,
            p.a,
            p.b,
            p.add,
            p.shiryaev_add,
            p.add_ratio,
            if p.calibrated { "" } else { "  (not calibrated)" }
        );
    }
    Ok(if pts.iter().all(|p| p.calibrated) { Status::Ok } else { Status::Calibration })
}

pub fn compare_fractional_cmd(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "compare-fractional")?;
    let rows = compare_fractional(
        &cfg.model()?,
        &cfg.targets.rho_list,
        cfg.targets.pfa,
        cfg.targets.ano_percent,
        &cfg.mc(),
        cfg.tolerances(),
    )?;
    out.csv("compare_fractional.csv", &rows)?;
    out.json("compare_fractional.json", cfg, &rows)?;
    println!("{:>8} {:>9} {:>9} {:>9} {:>7} {:>7}", "rho", "Shiryaev", "two-thr", "fraction", "eps", "gap");
    for r in &rows {
        println!(
            "{:>8} {:>9.2} {:>9.2} {:>9.2} {:>7.3} {:>6.1}%{}",
            r.rho,
            r.shiryaev_add,
            r.two_threshold_add,
            r.fractional_add,
            r.fractional_eps,
            100.0 * r.relative_gap,
            if r.calibrated { "" } else { "  (not calibrated)" }
        );
    }
    Ok(if rows.iter().all(|r| r.calibrated) { Status::Ok } else { Status::Calibration })
}

pub fn approx(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = OutputDir::create(cfg, "approx")?;
    let (model, prior) = (cfg.model()?, cfg.prior()?);
    let settings = cfg.approx_settings();
    let consts = Arc::new(renewal_constants(&model, &prior, &settings)?);
    let b = cfg.lower_threshold().unwrap_or(f64::NEG_INFINITY);
    let rep = approx_report(cfg.policy.a, b, &model, &prior, &consts, &settings)?;
    out.csv("approx.csv", std::slice::from_ref(&rep))?;
    out.json("approx.json", cfg, &rep)?;
    println!("PFA ≈ {:.4e}", rep.pfa_approx);
    println!("ADD ≈ {:.3} (second order, E[η(b)]); {:.3} with E[η(−∞)]", rep.add_shiryaev_from_b, rep.add_shiryaev);
    if let (Some(ano), Some(new)) = (rep.ano_approx, rep.add_new) {
        println!("ANO ≈ {ano:.3}, ANO1 ≈ {:.3}, cycle-based ADD ≈ {new:.3}", rep.ano1_approx);
    }
    Ok(Status::Ok)
}

pub fn config_reference() -> String {
    crate::reference_doc::render(&ExperimentConfig::default())
}

pub fn classify(err: &QcdError) -> Status {
    match err {
        QcdError::Structure(_) => Status::Structure,
        QcdError::Calibration { .. } => Status::Calibration,
        _ => Status::Error,
    }
}
