//! Closed-loop rolling-horizon simulation and out-of-sample evaluation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    check_feasible, stage_cost, transition, unserved_load, Decision, DomainError, Exogenous, SystemParams,
    SystemState, FEASIBILITY_TOL,
};
use crate::forecast::{episode_seed, ExogenousSeries, ForecastModel};
use crate::policy::{DecisionContext, LookaheadStep, Policy, PolicyError};
use crate::risk::{self, Sample, Threshold};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("step {step}: {source}")]
    Policy {
        step: usize,
        #[source]
        source: PolicyError,
    },
    #[error("step {step}: infeasible decision: {source}")]
    Infeasible {
        step: usize,
        #[source]
        source: DomainError,
    },
    #[error("step {step}: {source}")]
    Transition {
        step: usize,
        #[source]
        source: DomainError,
    },
    #[error("episode with seed {seed}: {source}")]
    Episode {
        seed: u64,
        #[source]
        source: Box<SimError>,
    },
}

/// Everything needed to run episodes except the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub params: SystemParams,
    pub series: ExogenousSeries,
    /// Wind model; its seed is replaced by the episode seed.
    pub forecast: ForecastModel,
    pub initial_battery: f64,
    pub initial_hydrogen: f64,
}

impl Instance {
    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        let t = self.params.episode_length;
        if self.series.demand.len() != t || self.series.hydrogen_price.len() != t {
            return Err(SimError::Instance(format!(
                "series has {} demand and {} price entries, episode has {t} steps",
                self.series.demand.len(),
                self.series.hydrogen_price.len()
            )));
        }
        if !(self.forecast.relative_std.is_finite() && self.forecast.relative_std >= 0.0) {
            return Err(SimError::Instance(format!(
                "relative wind std must be nonnegative, got {}",
                self.forecast.relative_std
            )));
        }
        self.initial_state(self.series.initial_wind).validate(&self.params)?;
        Ok(())
    }

    pub fn initial_state(&self, wind: f64) -> SystemState {
        SystemState {
            t: 0,
            demand: self.series.demand[0],
            wind,
            hydrogen_price: self.series.hydrogen_price[0],
            battery_level: self.initial_battery,
            hydrogen_level: self.initial_hydrogen,
        }
    }

    /// Wind model of the episode with `seed`.
    pub fn episode_model(&self, seed: u64) -> ForecastModel {
        self.forecast.with_seed(seed)
    }

    /// Realized wind of the episode with `seed`.
    pub fn truth_path(&self, seed: u64) -> Vec<f64> {
        self.episode_model(seed)
            .truth_path(self.series.initial_wind, self.params.episode_length)
    }

    /// Known future data for the look-ahead at step `t`.
    pub fn lookahead(&self, t: usize) -> Vec<LookaheadStep> {
        let last = self.params.episode_length - 1;
        let end = (t + self.params.horizon).min(last);
        (t + 1..=end)
            .map(|s| LookaheadStep {
                demand: self.series.demand[s],
                hydrogen_price: self.series.hydrogen_price[s],
                acquisition: self.params.acquisition_allowed(s),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: SystemState,
    pub decision: Decision,
    pub cost: f64,
    pub loss: f64,
    /// Wall-clock seconds spent in the policy.
    pub decision_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
    pub total_cost: f64,
    pub total_loss: f64,
    pub final_state: SystemState,
}

impl EpisodeTrace {
    pub fn mean_decision_seconds(&self) -> f64 {
        self.steps.iter().map(|s| s.decision_seconds).sum::<f64>() / self.steps.len() as f64
    }
}

/// Runs `policy` along the realized wind `truth`, sampling fans from `model`.
pub fn run_episode(
    policy: &dyn Policy,
    instance: &Instance,
    truth: &[f64],
    model: &ForecastModel,
) -> Result<EpisodeTrace, SimError> {
    instance.validate()?;
    let params = &instance.params;
    let len = params.episode_length;
    if truth.len() != len {
        return Err(SimError::Instance(format!(
            "truth path has {} steps, episode has {len}",
            truth.len()
        )));
    }
    let mut state = instance.initial_state(truth[0]);
    let mut steps = Vec::with_capacity(len);
    let (mut total_cost, mut total_loss) = (0.0, 0.0);
    for t in 0..len {
        let future = instance.lookahead(t);
        let point = vec![state.wind; future.len()];
        let fan = match policy.fan_size() {
            0 => None,
            n => Some(model.sample_fan(state.wind, future.len(), n, t)),
        };
        let ctx = DecisionContext {
            state: &state,
            params,
            future: &future,
            point_forecast: &point,
            fan: fan.as_ref(),
        };
        let start = Instant::now();
        let out = policy
            .decide(&ctx)
            .map_err(|source| SimError::Policy { step: t, source })?;
        let decision_seconds = start.elapsed().as_secs_f64();
        let decision = out.decision;
        check_feasible(&state, params, params.acquisition_allowed(t), &decision, FEASIBILITY_TOL)
            .map_err(|source| SimError::Infeasible { step: t, source })?;
        let cost = stage_cost(&state, &decision, params);
        let loss = unserved_load(&state, &decision, params);
        total_cost += cost;
        total_loss += loss;
        let next = if t + 1 < len {
            Exogenous {
                demand: instance.series.demand[t + 1],
                wind: truth[t + 1],
                hydrogen_price: instance.series.hydrogen_price[t + 1],
            }
        } else {
            Exogenous::default()
        };
        let next_state =
            transition(&state, &decision, params, next).map_err(|source| SimError::Transition { step: t, source })?;
        steps.push(StepRecord {
            state,
            decision,
            cost,
            loss,
            decision_seconds,
        });
        state = next_state;
    }
    Ok(EpisodeTrace {
        steps,
        total_cost,
        total_loss,
        final_state: state,
    })
}

/// Runs the episode identified by `seed`.
pub fn run_seeded_episode(policy: &dyn Policy, instance: &Instance, seed: u64) -> Result<EpisodeTrace, SimError> {
    let truth = instance.truth_path(seed);
    run_episode(policy, instance, &truth, &instance.episode_model(seed))
        .map_err(|e| SimError::Episode {
            seed,
            source: Box::new(e),
        })
}

/// Seeds of the `count` evaluation episodes; shared by every policy.
pub fn episode_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| episode_seed(base, i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSummary {
    pub policy: String,
    pub scenarios: usize,
    pub mean_cost: f64,
    pub q80: f64,
    pub q90: f64,
    pub q95: f64,
    pub mean_loss: f64,
    /// `(ζ, bPOE of total loss at ζ)`.
    pub bpoe: Vec<(f64, f64)>,
    /// Mean wall-clock seconds per decision.
    pub mean_decision_seconds: f64,
    pub costs: Vec<f64>,
    pub losses: Vec<f64>,
}

/// Evaluates `policy` on `count` episodes seeded from `seed`.
pub fn evaluate(
    policy: &dyn Policy,
    instance: &Instance,
    count: usize,
    seed: u64,
    zetas: &[f64],
) -> Result<EvaluationSummary, SimError> {
    if count == 0 {
        return Err(SimError::Instance("scenario count must be at least 1".into()));
    }
    let thresholds = zetas
        .iter()
        .map(|&z| Threshold::new(z).map_err(|e| SimError::Instance(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let traces: Vec<Result<EpisodeTrace, SimError>> = episode_seeds(seed, count)
        .into_par_iter()
        .map(|s| run_seeded_episode(policy, instance, s))
        .collect();
    let mut costs = Vec::with_capacity(count);
    let mut losses = Vec::with_capacity(count);
    let mut seconds = 0.0;
    for trace in traces {
        let trace = trace?;
        costs.push(trace.total_cost);
        losses.push(trace.total_loss);
        seconds += trace.mean_decision_seconds();
    }
    summarize(policy.name(), costs, losses, &thresholds, seconds / count as f64)
}

fn summarize(
    policy: String,
    costs: Vec<f64>,
    losses: Vec<f64>,
    thresholds: &[Threshold],
    mean_decision_seconds: f64,
) -> Result<EvaluationSummary, SimError> {
    let invalid = |e: risk::RiskError| SimError::Instance(e.to_string());
    let cost_sample = Sample::new(costs.clone()).map_err(invalid)?;
    let loss_sample = Sample::new(losses.clone()).map_err(invalid)?;
    Ok(EvaluationSummary {
        policy,
        scenarios: costs.len(),
        mean_cost: cost_sample.mean(),
        q80: risk::var(&cost_sample, 0.8),
        q90: risk::var(&cost_sample, 0.9),
        q95: risk::var(&cost_sample, 0.95),
        mean_loss: loss_sample.mean(),
        bpoe: thresholds
            .iter()
            .map(|&z| (z.value(), risk::bpoe(&loss_sample, z)))
            .collect(),
        mean_decision_seconds,
        costs,
        losses,
    })
}
