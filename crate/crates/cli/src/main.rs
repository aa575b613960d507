//! `qcd`: experiments for quickest change detection with on-off observation control.
//!
//! Exit codes: 0 success, 1 error or failed replication cell, 2 no usable
//! policy structure, 3 calibration missed its tolerance, 4 too many trials
//! hit the horizon cap.

mod commands;
mod config;
mod output;
mod reference_doc;
mod replicate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use qcd_core::QcdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Error,
    Structure,
    Calibration,
    Truncation,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::Structure => 2,
            Status::Calibration => 3,
            Status::Truncation => 4,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(QcdError),
    Io(std::io::Error),
}

impl From<QcdError> for CliError {
    fn from(e: QcdError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qcd", version, about = "Bayesian quickest change detection with on-off observation control")]
struct Cli {
    /// TOML experiment file; missing keys take the defaults of `config-reference`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `monte_carlo.master_seed` and `approx.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `monte_carlo.n_trials` and every `replicate.*_trials`.
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Bellman equation on a grid; write the grid and its decision structure.
    Bellman,
    /// Estimate ADD, PFA, ANO and ANO1 of the configured policy.
    Simulate,
    /// Find the stopping threshold `a` that meets `targets.pfa`.
    CalibrateA,
    /// Find the sampling threshold `b` that meets `targets.ano_percent` at `policy.a`.
    CalibrateB,
    /// ADD against ANO% for each rho, next to the Shiryaev delay at the same PFA.
    Tradeoff,
    /// Two-threshold against fractional sampling at common PFA and ANO%.
    CompareFractional,
    /// Analytical approximations at the configured thresholds.
    Approx,
    /// Re-run every published table row and grade each cell.
    ReplicateTables,
    /// Print every configuration key with its default and meaning.
    ConfigReference,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.master_seed = seed;
        cfg.approx.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(n) = cli.trials {
        cfg.monte_carlo.n_trials = n;
        let r = &mut cfg.replicate;
        r.pfa_trials = n;
        r.sweep_trials = n;
        r.row_trials = n;
        r.delay_trials = n;
        r.small_rho_trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn replicate_tables(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let out = output::OutputDir::create(cfg, "replicate-tables")?;
    let rep = replicate::run(cfg)?;
    out.csv("replicate_tables.csv", &rep.cells)?;
    out.json("replicate_tables.json", cfg, &rep.blocks)?;
    let mut block = "";
    for c in &rep.cells {
        if c.block != block {
            block = c.block;
            println!("{block}");
        }
        let verdict = match (c.acceptance, c.pass) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, true) => "ok",
            (false, false) => "off",
        };
        println!(
            "  {verdict:<4} {:<38} {:<30} published {:<12.6} got {:<12.6} ({}){}",
            c.row,
            c.quantity,
            c.published,
            c.computed,
            c.tolerance,
            if c.note.is_empty() { String::new() } else { format!("  {}", c.note) }
        );
    }
    for b in &rep.blocks {
        println!(
            "{}: {}/{} acceptance cells pass; {} other cells outside tolerance",
            b.block,
            b.acceptance_cells - b.acceptance_failures,
            b.acceptance_cells,
            b.other_failures
        );
    }
    Ok(if rep.acceptance_failures() == 0 { Status::Ok } else { Status::Error })
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    if let Command::ConfigReference = cli.command {
        print!("{}", commands::config_reference());
        return Ok(Status::Ok);
    }
    let cfg = load(cli)?;
    match cli.command {
        Command::Bellman => commands::bellman(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::CalibrateA => commands::calibrate_a_cmd(&cfg),
        Command::CalibrateB => commands::calibrate_b_cmd(&cfg),
        Command::Tradeoff => commands::tradeoff(&cfg),
        Command::CompareFractional => commands::compare_fractional_cmd(&cfg),
        Command::Approx => commands::approx(&cfg),
        Command::ReplicateTables => replicate_tables(&cfg),
        Command::ConfigReference => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            match &e {
                CliError::Core(err) => commands::classify(err),
                CliError::Io(_) => Status::Error,
            }
        }
    };
    ExitCode::from(status.code())
}
