use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::domain::{periodic_schedule, SystemParams};
use crate::forecast::{load_series, synthesize_series, ExogenousSeries, ForecastModel};
use crate::policy::PolicySpec;
use crate::sim::Instance;
use crate::tuning::{ObjectiveKind, Schedule, SgdConfig, StoppingRule};

use super::CliError;

/// Top-level experiment file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    pub data: DataSection,
    #[serde(default)]
    pub forecast: ForecastSection,
    #[serde(default)]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    pub tuning: Option<TuningSection>,
}

/// Storage and penalty parameters. Anything left out is dimensioned from the
/// peak demand of the series.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub episode_length: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_interval")]
    pub acquisition_interval: usize,
    #[serde(default = "default_start")]
    pub acquisition_start: usize,
    pub battery_capacity: Option<f64>,
    pub hydrogen_capacity: Option<f64>,
    pub charge_eff: Option<f64>,
    pub discharge_eff: Option<f64>,
    pub fuel_cell_eff: Option<f64>,
    pub charge_limit: Option<f64>,
    pub discharge_limit: Option<f64>,
    pub fuel_cell_limit: Option<f64>,
    pub loss_penalty: Option<f64>,
    pub curtail_penalty: Option<f64>,
    /// Initial storage levels as fractions of capacity.
    #[serde(default = "half")]
    pub initial_battery: f64,
    #[serde(default = "half")]
    pub initial_hydrogen: f64,
}

fn default_horizon() -> usize {
    7
}
fn default_interval() -> usize {
    7
}
fn default_start() -> usize {
    1
}
fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `step,demand_mwh,h2_price_per_mwh` file, relative to the config file.
    pub csv: Option<PathBuf>,
    pub synthetic_peak: Option<f64>,
    #[serde(default = "one")]
    pub synthetic_seed: u64,
    #[serde(default = "default_price")]
    pub base_price: f64,
    /// Defaults to 80% of peak demand.
    pub initial_wind: Option<f64>,
}

fn one() -> u64 {
    1
}
fn default_price() -> f64 {
    60.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    #[serde(default = "default_rho")]
    pub relative_std: f64,
    pub clamp_max: Option<f64>,
}

fn default_rho() -> f64 {
    0.3
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            relative_std: default_rho(),
            clamp_max: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default)]
    pub zeta: Vec<f64>,
    #[serde(default = "default_sweep")]
    pub sweep_theta: Vec<f64>,
}

fn default_scenarios() -> usize {
    100
}

fn default_sweep() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            scenarios: default_scenarios(),
            zeta: Vec::new(),
            sweep_theta: default_sweep(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningMode {
    Grid,
    Sgd,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    pub mode: TuningMode,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveKind,
    /// Episodes per grid point.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_sweep")]
    pub grid: Vec<f64>,
    /// Tune a per-lead-time table instead of a constant.
    #[serde(default)]
    pub lookup: bool,
    #[serde(default = "one_f")]
    pub initial: f64,
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    pub smoothing: Option<Schedule>,
    pub step: Option<Schedule>,
    pub averaging: Option<Schedule>,
    pub stopping: Option<StoppingRule>,
    /// Replaces the simulator by `Σ (θᵢ − targetᵢ)²`.
    pub quadratic_target: Option<Vec<f64>>,
}

fn default_objective() -> ObjectiveKind {
    ObjectiveKind::ExpectedCost
}
fn default_samples() -> usize {
    50
}
fn one_f() -> f64 {
    1.0
}

impl TuningSection {
    pub fn sgd_config(&self, dim: usize, seed: u64) -> SgdConfig {
        let initial = if self.lookup {
            crate::policy::Theta::LookupTable(vec![self.initial; dim])
        } else {
            crate::policy::Theta::Constant(self.initial)
        };
        let mut cfg = SgdConfig::with_defaults(initial, seed);
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.smoothing {
            cfg.smoothing = v;
        }
        if let Some(v) = self.step {
            cfg.step = v;
        }
        if let Some(v) = self.averaging {
            cfg.averaging = v;
        }
        if let Some(v) = self.stopping {
            cfg.stopping = v;
        }
        cfg
    }
}

/// Reads and validates a config file.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {}", path.display(), e.message())))?;
    if let Some(csv) = &cfg.data.csv {
        if csv.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.data.csv = Some(base.join(csv));
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
    }

    pub fn series(&self) -> Result<ExogenousSeries, CliError> {
        let d = &self.data;
        let len = self.system.episode_length;
        let invalid = |e: crate::forecast::IngestError| CliError::Validation(e.to_string());
        let mut series = match (&d.csv, d.synthetic_peak) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation("data: set either csv or synthetic_peak, not both".into()))
            }
            (None, None) => return Err(CliError::Validation("data: one of csv or synthetic_peak is required".into())),
            (Some(path), None) => {
                if !path.exists() {
                    return Err(CliError::Validation(format!("data file {} does not exist", path.display())));
                }
                let wind = d.initial_wind.unwrap_or(0.0);
                let mut s = load_series(path, Some(len), wind).map_err(invalid)?;
                if d.initial_wind.is_none() {
                    s.initial_wind = 0.8 * s.demand.iter().copied().fold(0.0, f64::max);
                }
                s
            }
            (None, Some(peak)) => synthesize_series(peak, len, d.synthetic_seed, d.base_price).map_err(invalid)?,
        };
        if let Some(w) = d.initial_wind {
            if !(w.is_finite() && w >= 0.0) {
                return Err(CliError::Validation(format!("data: initial_wind must be nonnegative, got {w}")));
            }
            series.initial_wind = w;
        }
        Ok(series)
    }

    pub fn instance(&self) -> Result<Instance, CliError> {
        let s = &self.system;
        if s.episode_length == 0 {
            return Err(CliError::Validation("system: episode_length must be at least 1".into()));
        }
        if s.horizon > s.episode_length {
            return Err(CliError::Validation(format!(
                "system: horizon {} exceeds episode_length {}",
                s.horizon, s.episode_length
            )));
        }
        let series = self.series()?;
        let peak = series.demand.iter().copied().fold(0.0, f64::max);
        let mut p = SystemParams::dimensioned(peak, s.episode_length, s.horizon);
        p.acquisition_schedule = periodic_schedule(s.episode_length, s.acquisition_interval, s.acquisition_start);
        let overrides = [
            (&mut p.battery_capacity, s.battery_capacity),
            (&mut p.hydrogen_capacity, s.hydrogen_capacity),
            (&mut p.charge_eff, s.charge_eff),
            (&mut p.discharge_eff, s.discharge_eff),
            (&mut p.fuel_cell_eff, s.fuel_cell_eff),
            (&mut p.charge_limit, s.charge_limit),
            (&mut p.discharge_limit, s.discharge_limit),
            (&mut p.fuel_cell_limit, s.fuel_cell_limit),
            (&mut p.loss_penalty, s.loss_penalty),
            (&mut p.curtail_penalty, s.curtail_penalty),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        for (name, f) in [("initial_battery", s.initial_battery), ("initial_hydrogen", s.initial_hydrogen)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Validation(format!("system: {name} must be a fraction in [0, 1], got {f}")));
            }
        }
        let instance = Instance {
            initial_battery: s.initial_battery * p.battery_capacity,
            initial_hydrogen: s.initial_hydrogen * p.hydrogen_capacity,
            params: p,
            series,
            forecast: ForecastModel {
                relative_std: self.forecast.relative_std,
                seed: self.seed,
                clamp_max: self.forecast.clamp_max,
            },
        };
        instance
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for policy in &self.policies {
            policy
                .validate(s.horizon)
                .map_err(|e| CliError::Validation(e.to_string()))?;
        }
        Ok(instance)
    }
}
