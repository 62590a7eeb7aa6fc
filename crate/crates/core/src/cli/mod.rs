//! Command-line front end. Every command writes a CSV with a header row to
//! `--out` or standard output.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::policy::{Policy, PolicySpec, Theta};
use crate::risk::{self, RiskLevel, Sample, Threshold};
use crate::sim::{self, run_seeded_episode};
use crate::tuning::{self, EpisodeSampler, QuadraticSampler, SimSampler};

pub use config::ExperimentConfig;
use config::TuningMode;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "riskla", version, about = "Risk-aware look-ahead operation of a wind, battery and hydrogen system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop episode and write the per-step trace.
    Simulate(Common),
    /// Evaluate the configured policies on paired out-of-sample episodes.
    Evaluate(Common),
    /// Tune the D-LA discount by grid search or smoothed SGD.
    Tune(Common),
    /// bPOE of total unserved load for constant-θ D-LA over a θ × ζ grid.
    SweepBpoe(Common),
    /// VaR, CVaR, PoE and bPOE of a sample file.
    Risk(RiskArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub scenarios: Option<usize>,
    /// Policy kind (dla, sla, scvar, sbpoe) or full name as printed in reports.
    #[arg(long, value_name = "NAME")]
    pub policy: Option<String>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub zeta: Option<Vec<f64>>,
    /// Add the mean wall-clock decision time column (not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// CSV with a header row; the first column is the sample.
    #[arg(long, value_name = "PATH")]
    pub sample: PathBuf,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub zeta: Option<Vec<f64>>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (csv, out) = match &cli.command {
        Command::Simulate(a) => (simulate(a)?, &a.out),
        Command::Evaluate(a) => (evaluate(a)?, &a.out),
        Command::Tune(a) => (tune(a)?, &a.out),
        Command::SweepBpoe(a) => (sweep_bpoe(a)?, &a.out),
        Command::Risk(a) => (risk_command(a)?, &a.out),
    };
    write_output(out.as_deref(), &csv)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| runtime(format!("cannot write output: {e}")))
        }
    }
}

fn short_kind(p: &PolicySpec) -> &'static str {
    match p {
        PolicySpec::Dla { .. } => "dla",
        PolicySpec::Sla { .. } => "sla",
        PolicySpec::Scvar { .. } => "scvar",
        PolicySpec::Sbpoe { .. } => "sbpoe",
    }
}

fn matches_name(p: &PolicySpec, name: &str) -> bool {
    short_kind(p).eq_ignore_ascii_case(name) || p.name() == name
}

fn load(args: &Common) -> Result<(ExperimentConfig, sim::Instance), CliError> {
    let cfg = config::load(&args.config)?;
    let instance = cfg.instance()?;
    Ok((cfg, instance))
}

fn theta_override(args: &Common) -> Result<Option<Vec<Theta>>, CliError> {
    match &args.theta {
        None => Ok(None),
        Some(list) => {
            if let Some(bad) = list.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(CliError::Validation(format!("--theta entries must be nonnegative, got {bad}")));
            }
            Ok(Some(list.iter().map(|&v| Theta::Constant(v)).collect()))
        }
    }
}

fn zetas(args: &Common, cfg: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let list = args.zeta.clone().unwrap_or_else(|| cfg.evaluation.zeta.clone());
    if let Some(bad) = list.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Validation(format!("zeta entries must be nonnegative, got {bad}")));
    }
    Ok(list)
}

fn scenario_count(args: &Common, default: usize) -> Result<usize, CliError> {
    match args.scenarios.unwrap_or(default) {
        0 => Err(CliError::Validation("scenario count must be at least 1".into())),
        n => Ok(n),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn simulate(args: &Common) -> Result<String, CliError> {
    let (cfg, instance) = load(args)?;
    let mut policy = match &args.policy {
        Some(name) => cfg
            .policies
            .iter()
            .find(|p| matches_name(p, name))
            .cloned()
            .ok_or_else(|| CliError::Validation(format!("no configured policy matches {name:?}")))?,
        None => match cfg.policies.first() {
            Some(p) => p.clone(),
            None if args.theta.is_some() => PolicySpec::Dla {
                theta: Theta::Constant(1.0),
            },
            None => return Err(CliError::Validation("no policy configured".into())),
        },
    };
    if let (Some(thetas), PolicySpec::Dla { theta }) = (theta_override(args)?, &mut policy) {
        if thetas.len() != 1 {
            return Err(CliError::Validation("simulate takes a single --theta value".into()));
        }
        *theta = thetas[0].clone();
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let trace = run_seeded_episode(&policy, &instance, seed).map_err(runtime)?;
    let mut out = String::from("t,demand,wind,price,R_E,R_H,x_wd,x_rd,x_hd,x_wr,x_hr,x_h,x_wx,cost,loss\n");
    for (t, s) in trace.steps.iter().enumerate() {
        let st = &s.state;
        let mut fields = vec![
            t.to_string(),
            num(st.demand),
            num(st.wind),
            num(st.hydrogen_price),
            num(st.battery_level),
            num(st.hydrogen_level),
        ];
        fields.extend(s.decision.to_array().iter().map(|&v| num(v)));
        fields.push(num(s.cost));
        fields.push(num(s.loss));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn evaluate(args: &Common) -> Result<String, CliError> {
    let (cfg, instance) = load(args)?;
    let mut policies: Vec<PolicySpec> = cfg
        .policies
        .iter()
        .filter(|p| args.policy.as_deref().is_none_or(|n| matches_name(p, n)))
        .cloned()
        .collect();
    if let Some(thetas) = theta_override(args)? {
        policies.extend(thetas.into_iter().map(|theta| PolicySpec::Dla { theta }));
    }
    if policies.is_empty() {
        return Err(CliError::Validation("policy list is empty".into()));
    }
    let count = scenario_count(args, cfg.evaluation.scenarios)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let zetas = zetas(args, &cfg)?;
    let mut out = String::from("policy,mean,q80,q90,q95");
    for z in &zetas {
        let _ = write!(out, ",bpoe@{z}");
    }
    if args.timing {
        out.push_str(",avg_decision_s");
    }
    out.push('\n');
    for p in &policies {
        let s = sim::evaluate(p, &instance, count, seed, &zetas).map_err(runtime)?;
        let _ = write!(out, "{},{},{},{},{}", s.policy, s.mean_cost, s.q80, s.q90, s.q95);
        for (_, b) in &s.bpoe {
            let _ = write!(out, ",{b}");
        }
        if args.timing {
            let _ = write!(out, ",{}", s.mean_decision_seconds);
        }
        out.push('\n');
    }
    Ok(out)
}

fn tune(args: &Common) -> Result<String, CliError> {
    let (cfg, instance) = load(args)?;
    let section = cfg
        .tuning
        .clone()
        .ok_or_else(|| CliError::Validation("config has no [tuning] section".into()))?;
    section
        .objective
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let horizon = instance.params.horizon;
    let quadratic;
    let simulated = SimSampler { instance: &instance };
    let sampler: &dyn EpisodeSampler = match &section.quadratic_target {
        Some(target) => {
            quadratic = QuadraticSampler { target: target.clone() };
            &quadratic
        }
        None => &simulated,
    };
    let dim = match (&section.quadratic_target, section.lookup) {
        (Some(t), _) => t.len(),
        (None, true) => horizon,
        (None, false) => 1,
    };
    let report = match section.mode {
        TuningMode::Grid => {
            let grid: Vec<Theta> = match theta_override(args)? {
                Some(list) => list,
                None => section.grid.iter().map(|&v| Theta::Constant(v)).collect(),
            };
            if grid.is_empty() {
                return Err(CliError::Validation("tuning grid is empty".into()));
            }
            let count = scenario_count(args, section.samples)?;
            tuning::tune_grid(sampler, section.objective, &grid, count, seed)
        }
        TuningMode::Sgd => {
            let sgd = section.sgd_config(dim, seed);
            sgd.validate().map_err(|e| CliError::Validation(e.to_string()))?;
            tuning::tune_sgd(sampler, section.objective, &sgd)
        }
    }
    .map_err(runtime)?;
    let width = report.trace.first().map_or(dim, |e| e.theta.len());
    let mut out = String::from("iteration");
    if width == 1 {
        out.push_str(",theta");
    } else {
        for i in 1..=width {
            let _ = write!(out, ",theta_{i}");
        }
    }
    out.push_str(",estimate\n");
    for e in &report.trace {
        let _ = write!(out, "{}", e.iteration);
        for v in &e.theta {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", e.estimate);
    }
    Ok(out)
}

fn sweep_bpoe(args: &Common) -> Result<String, CliError> {
    let (cfg, instance) = load(args)?;
    let thetas = args.theta.clone().unwrap_or_else(|| cfg.evaluation.sweep_theta.clone());
    let zetas = zetas(args, &cfg)?;
    if thetas.is_empty() || zetas.is_empty() {
        return Err(CliError::Validation("sweep needs at least one theta and one zeta".into()));
    }
    if let Some(bad) = thetas.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Validation(format!("theta entries must be nonnegative, got {bad}")));
    }
    let count = scenario_count(args, cfg.evaluation.scenarios)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut out = String::from("theta,zeta,bpoe\n");
    for &theta in &thetas {
        let policy = PolicySpec::Dla {
            theta: Theta::Constant(theta),
        };
        let s = sim::evaluate(&policy, &instance, count, seed, &zetas).map_err(runtime)?;
        for (z, b) in s.bpoe {
            let _ = writeln!(out, "{theta},{z},{b}");
        }
    }
    Ok(out)
}

fn read_sample(path: &Path) -> Result<Sample, CliError> {
    if !path.exists() {
        return Err(CliError::Validation(format!("sample file {} does not exist", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = record.get(0).unwrap_or_default();
        let v: f64 = raw
            .parse()
            .map_err(|_| CliError::Validation(format!("{} line {line}: {raw:?} is not a number", path.display())))?;
        values.push(v);
    }
    Sample::new(values).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn risk_command(args: &RiskArgs) -> Result<String, CliError> {
    let sample = read_sample(&args.sample)?;
    let alphas = args.alpha.clone().unwrap_or_default();
    let zetas = args.zeta.clone().unwrap_or_default();
    if alphas.is_empty() && zetas.is_empty() {
        return Err(CliError::Validation("give at least one --alpha or --zeta".into()));
    }
    let mut out = String::from("measure,level,value\n");
    for a in alphas {
        let level = RiskLevel::new(a).map_err(|e| CliError::Validation(e.to_string()))?;
        let _ = writeln!(out, "var,{a},{}", risk::var(&sample, a));
        let _ = writeln!(out, "cvar,{a},{}", risk::cvar(&sample, level));
    }
    for z in zetas {
        let threshold = Threshold::new(z).map_err(|e| CliError::Validation(e.to_string()))?;
        let _ = writeln!(out, "poe,{z},{}", risk::poe(&sample, z));
        let _ = writeln!(out, "bpoe,{z},{}", risk::bpoe(&sample, threshold));
    }
    Ok(out)
}
