//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_estimators, Preset, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::montecarlo::{run_sweep, theory_curves};
use crate::report::{write_sweep, write_theory};
use crate::training::pilot_overhead;
use crate::validate::{run_validation, ValidateOptions};

#[derive(Debug, Parser)]
#[command(name = "ris-chanest", version, about = "Channel estimation for RIS-assisted multi-user uplinks")]
#[command(after_help = "Worker threads can be pinned with the RIS_CHANEST_WORKERS environment variable.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form normalized MSE and high-power floors.
    Theory(RunArgs),
    /// Monte Carlo sweep with theory columns.
    Sweep(RunArgs),
    /// Run the invariant suite and print a pass/fail table.
    Validate(ValidateArgs),
    /// All estimators versus SNR at 16 groups on the reference scenario.
    #[command(name = "reproduce-fig2")]
    ReproduceFig2(RunArgs),
    /// Grouped LMMSE variants versus SNR for several group counts.
    #[command(name = "reproduce-fig3")]
    ReproduceFig3(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Scenario file (sections [scenario], [sweep], [output]).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario used when no file is given.
    #[arg(long, value_parser = ["paper", "desk"])]
    pub preset: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_min_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_max_db: Option<f64>,
    #[arg(long)]
    pub snr_step_db: Option<f64>,
    /// Comma-separated group counts.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    /// Comma-separated estimator names (LS, LMMSE, GroupingLS, GroupingLMMSE,
    /// CorrelatedGroupingLMMSE).
    #[arg(long)]
    pub estimators: Option<String>,
    /// Output CSV path; `-` or absent writes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the desk scenario.
    #[arg(long, value_parser = ["paper", "desk"])]
    pub preset: Option<String>,
    /// Smaller sample sizes for a fast smoke run.
    #[arg(long)]
    pub quick: bool,
}

fn load(config: &Option<PathBuf>, preset: &Option<String>, fallback: Preset) -> Result<RunConfig> {
    match (config, preset) {
        (Some(_), Some(_)) => Err(Error::Usage("--config and --preset are mutually exclusive".into())),
        (Some(path), None) => RunConfig::load(path),
        (None, Some(p)) => Ok(RunConfig::preset(p.parse()?)),
        (None, None) => Ok(RunConfig::preset(fallback)),
    }
}

impl RunArgs {
    /// Scenario after applying command-line overrides.
    pub fn resolve(&self, fallback: Preset) -> Result<RunConfig> {
        let mut cfg = load(&self.config, &self.preset, fallback)?;
        let sw = &mut cfg.sweep;
        if let Some(t) = self.trials {
            if t == 0 {
                return Err(Error::Usage("--trials must be at least 1".into()));
            }
            sw.trials = t;
        }
        if let Some(s) = self.seed {
            sw.seed = s;
        }
        if let Some(v) = self.snr_min_db {
            sw.snr_min_db = v;
        }
        if let Some(v) = self.snr_max_db {
            sw.snr_max_db = v;
        }
        if let Some(v) = self.snr_step_db {
            sw.snr_step_db = v;
        }
        if let Some(g) = &self.groups {
            sw.groups = g.clone();
        }
        if let Some(e) = &self.estimators {
            sw.estimators = parse_estimators(e).map_err(Error::Usage)?;
        }
        if let Some(out) = &self.out {
            cfg.out = (out.as_os_str() != "-").then(|| out.clone());
        }
        Ok(cfg)
    }
}

fn output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn provenance(cfg: &RunConfig, command: &str) {
    eprintln!("# {command}: config {:016x}; {}", cfg.digest(), cfg.summary());
}

fn theory(cfg: &RunConfig) -> Result<()> {
    provenance(cfg, "theory");
    let rows = theory_curves(&cfg.sweep_config()?)?;
    let mut out = output(cfg)?;
    write_theory(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(cfg: &RunConfig, command: &str) -> Result<()> {
    provenance(cfg, command);
    let report = run_sweep(&cfg.sweep_config()?)?;
    log::info!("{command}: {} rows in {:.2?}", report.rows.len(), report.wall_time);
    for r in report.rows.iter().filter(|r| r.failures > 0) {
        eprintln!("# warning: {} (N_G = {}) at {} dB failed in {} of {} trials", r.estimator, r.n_groups, r.snr_db, r.failures, r.trials);
    }
    let mut out = output(cfg)?;
    write_sweep(&report, &mut out)?;
    out.flush()?;
    Ok(())
}

fn overhead_lines(cfg: &RunConfig) -> Vec<String> {
    let k = cfg.scenario.ue_positions.len();
    let n = cfg.scenario.ris_nx * cfg.scenario.ris_ny;
    let mut lines = vec![format!("pilot overhead without grouping: tau_p = K(N+1) = {}", pilot_overhead(k, n, n).0)];
    for &g in &cfg.sweep.groups {
        lines.push(format!("pilot overhead with {g} groups: tau_p = K(N_G+1) = {}", pilot_overhead(k, n, g).1));
    }
    lines
}

fn reproduce(mut cfg: RunConfig, args: &RunArgs, figure: u8) -> Result<()> {
    let n = cfg.scenario.ris_nx * cfg.scenario.ris_ny;
    if args.estimators.is_none() {
        cfg.sweep.estimators = match figure {
            2 => EstimatorKind::ALL.to_vec(),
            _ => vec![EstimatorKind::GroupingLmmse, EstimatorKind::CorrelatedGroupingLmmse],
        };
    }
    if args.groups.is_none() && figure == 3 {
        cfg.sweep.groups = [4, 8, 16, 32].into_iter().filter(|g| *g < n && n.is_multiple_of(*g)).collect();
    }
    for line in overhead_lines(&cfg) {
        eprintln!("# {line}");
    }
    sweep(&cfg, if figure == 2 { "reproduce-fig2" } else { "reproduce-fig3" })
}

fn validate(args: &ValidateArgs) -> Result<bool> {
    let cfg = load(&args.config, &args.preset, Preset::Desk)?;
    provenance(&cfg, "validate");
    let opts = if args.quick {
        ValidateOptions { moment_draws: 20_000, trials: 500, bias_trials: 2000, ..Default::default() }
    } else {
        ValidateOptions::default()
    };
    let report = run_validation(&cfg, opts);
    print!("{}", report.table());
    Ok(report.all_passed())
}

/// Runs a parsed command; `Ok(false)` means the command ran but reported failures.
pub fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Theory(a) => theory(&a.resolve(Preset::Paper)?).map(|_| true),
        Command::Sweep(a) => sweep(&a.resolve(Preset::Paper)?, "sweep").map(|_| true),
        Command::Validate(a) => validate(a),
        Command::ReproduceFig2(a) => reproduce(a.resolve(Preset::Paper)?, a, 2).map(|_| true),
        Command::ReproduceFig3(a) => reproduce(a.resolve(Preset::Paper)?, a, 3).map(|_| true),
    }
}

/// Exit status for an error: 2 for usage and configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Config(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}
