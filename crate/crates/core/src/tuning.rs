//! Offline tuning of the D-LA discount `θ`: simulation objectives, grid search,
//! and smoothed stochastic gradient descent with averaging.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{episode_seed, mix, stream, Purpose};
use crate::policy::{PolicySpec, Theta};
use crate::risk::{self, RiskLevel, Sample, Threshold};
use crate::sim::{episode_seeds, run_seeded_episode, Instance, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TuningError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid tuning setup: {0}")]
    Config(String),
    #[error("non-finite objective sample at iteration {iteration}, seed {seed}")]
    NonFinite { iteration: usize, seed: u64 },
}

/// Risk functional applied to a batch of episode outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveKind {
    ExpectedCost,
    CvarCost { alpha: f64 },
    BpoeLoss { zeta: f64 },
}

impl ObjectiveKind {
    pub fn validate(&self) -> Result<(), TuningError> {
        let bad = |e: risk::RiskError| TuningError::Config(e.to_string());
        match *self {
            ObjectiveKind::ExpectedCost => Ok(()),
            ObjectiveKind::CvarCost { alpha } => RiskLevel::new(alpha).map(|_| ()).map_err(bad),
            ObjectiveKind::BpoeLoss { zeta } if zeta < 0.0 => {
                Err(TuningError::Config(format!("zeta must be nonnegative, got {zeta}")))
            }
            ObjectiveKind::BpoeLoss { zeta } => Threshold::new(zeta).map(|_| ()).map_err(bad),
        }
    }

    /// Applies the functional to `(cost, loss)` outcomes.
    pub fn apply(&self, outcomes: &[Outcome]) -> f64 {
        let sample = |f: fn(&Outcome) -> f64| {
            Sample::new(outcomes.iter().map(f).collect()).expect("validated outcomes")
        };
        match *self {
            ObjectiveKind::ExpectedCost => sample(|o| o.cost).mean(),
            ObjectiveKind::CvarCost { alpha } => {
                risk::cvar(&sample(|o| o.cost), RiskLevel::new(alpha).expect("validated level"))
            }
            ObjectiveKind::BpoeLoss { zeta } => {
                risk::bpoe(&sample(|o| o.loss), Threshold::new(zeta).expect("validated threshold"))
            }
        }
    }
}

/// Total cost and total unserved load of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub cost: f64,
    pub loss: f64,
}

/// Source of episode outcomes `F(θ, ω)` and `R(θ, ω)`.
pub trait EpisodeSampler: Sync {
    fn outcome(&self, theta: &Theta, seed: u64) -> Result<Outcome, TuningError>;
}

/// Closed-loop D-LA episodes on an instance.
pub struct SimSampler<'a> {
    pub instance: &'a Instance,
}

impl EpisodeSampler for SimSampler<'_> {
    fn outcome(&self, theta: &Theta, seed: u64) -> Result<Outcome, TuningError> {
        let policy = PolicySpec::Dla { theta: theta.clone() };
        let trace = run_seeded_episode(&policy, self.instance, seed)?;
        Ok(Outcome {
            cost: trace.total_cost,
            loss: trace.total_loss,
        })
    }
}

/// Deterministic separable quadratic `Σ (θᵢ − targetᵢ)²`, reported as both cost and loss.
pub struct QuadraticSampler {
    pub target: Vec<f64>,
}

impl EpisodeSampler for QuadraticSampler {
    fn outcome(&self, theta: &Theta, _seed: u64) -> Result<Outcome, TuningError> {
        let theta = theta.components();
        if theta.len() != self.target.len() {
            return Err(TuningError::Config(format!(
                "theta has {} components, target has {}",
                theta.len(),
                self.target.len()
            )));
        }
        let v: f64 = theta.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(Outcome { cost: v, loss: v })
    }
}

/// Total cost of the D-LA(θ) episode with `seed`.
pub fn episode_cost(instance: &Instance, theta: &Theta, seed: u64) -> Result<f64, TuningError> {
    Ok(SimSampler { instance }.outcome(theta, seed)?.cost)
}

/// Total unserved load of the D-LA(θ) episode with `seed`.
pub fn episode_loss(instance: &Instance, theta: &Theta, seed: u64) -> Result<f64, TuningError> {
    Ok(SimSampler { instance }.outcome(theta, seed)?.loss)
}

fn outcomes(
    sampler: &dyn EpisodeSampler,
    theta: &Theta,
    seeds: &[u64],
    iteration: usize,
) -> Result<Vec<Outcome>, TuningError> {
    let results: Vec<Result<Outcome, TuningError>> =
        seeds.par_iter().map(|&s| sampler.outcome(theta, s)).collect();
    let mut out = Vec::with_capacity(seeds.len());
    for (r, &seed) in results.into_iter().zip(seeds) {
        let o = r?;
        if !(o.cost.is_finite() && o.loss.is_finite()) {
            return Err(TuningError::NonFinite { iteration, seed });
        }
        out.push(o);
    }
    Ok(out)
}

/// Estimates the objective at `θ` from `count` episodes seeded by `seed`.
/// The episodes depend only on `(seed, count)`, so different `θ` share them.
pub fn evaluate_objective(
    sampler: &dyn EpisodeSampler,
    objective: ObjectiveKind,
    theta: &Theta,
    count: usize,
    seed: u64,
) -> Result<f64, TuningError> {
    objective.validate()?;
    if count == 0 {
        return Err(TuningError::Config("sample count must be at least 1".into()));
    }
    let o = outcomes(sampler, theta, &episode_seeds(seed, count), 0)?;
    Ok(objective.apply(&o))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub estimate: f64,
    /// Averaged gradient after the iteration; empty for grid search.
    pub averaged_gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub theta: Theta,
    pub trace: Vec<TraceEntry>,
    pub gradient_norms: Vec<f64>,
}

/// Evaluates every grid point on the same episodes; the first minimizer wins.
pub fn tune_grid(
    sampler: &dyn EpisodeSampler,
    objective: ObjectiveKind,
    grid: &[Theta],
    count: usize,
    seed: u64,
) -> Result<TuningReport, TuningError> {
    if grid.is_empty() {
        return Err(TuningError::Config("grid is empty".into()));
    }
    let estimates = grid
        .iter()
        .map(|theta| evaluate_objective(sampler, objective, theta, count, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (i, &e) in estimates.iter().enumerate() {
        if e < estimates[best] {
            best = i;
        }
    }
    Ok(TuningReport {
        theta: grid[best].clone(),
        trace: grid
            .iter()
            .zip(&estimates)
            .enumerate()
            .map(|(i, (theta, &estimate))| TraceEntry {
                iteration: i,
                theta: theta.components(),
                estimate,
                averaged_gradient: Vec::new(),
            })
            .collect(),
        gradient_norms: Vec::new(),
    })
}

/// Deterministic sequence indexed by iteration `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant { value: f64 },
    /// `scale · k^(−exponent)`
    Power { scale: f64, exponent: f64 },
    /// `numerator / (k + offset)`
    Harmonic { numerator: f64, offset: f64 },
}

impl Schedule {
    pub fn at(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Power { scale, exponent } => scale * k.powf(-exponent),
            Schedule::Harmonic { numerator, offset } => numerator / (k + offset),
        }
    }
}

/// Distribution of the returned iterate index `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Uniform over `⌈N/2⌉..=N`.
    UpperHalf,
    /// Always `N`.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub smoothing: Schedule,
    pub step: Schedule,
    pub averaging: Schedule,
    pub stopping: StoppingRule,
    pub initial: Theta,
    pub seed: u64,
}

impl SgdConfig {
    /// Default schedules: `η_k = 0.1·k^(−1/4)`, `ψ_k = 0.2`, `φ_k = 2/(k+2)`,
    /// batches of 10, 2000 iterations, `R` uniform over the upper half.
    pub fn with_defaults(initial: Theta, seed: u64) -> Self {
        Self {
            iterations: 2000,
            batch_size: 10,
            smoothing: Schedule::Power {
                scale: 0.1,
                exponent: 0.25,
            },
            step: Schedule::Constant { value: 0.2 },
            averaging: Schedule::Harmonic {
                numerator: 2.0,
                offset: 2.0,
            },
            stopping: StoppingRule::UpperHalf,
            initial,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(TuningError::Config("iterations and batch size must be at least 1".into()));
        }
        for (name, s) in [("smoothing", self.smoothing), ("step", self.step), ("averaging", self.averaging)] {
            for k in [1, self.iterations] {
                let v = s.at(k);
                if !(v > 0.0 && v <= 1.0) {
                    return Err(TuningError::Config(format!("{name} schedule gives {v} at iteration {k}")));
                }
            }
        }
        if let Some(bad) = self.initial.components().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(TuningError::Config(format!("initial theta entry {bad} is not a finite nonnegative value")));
        }
        Ok(())
    }
}

fn seeds_for_iteration(seed: u64, k: usize, m: usize) -> Vec<u64> {
    let base = mix(seed ^ mix(k as u64));
    (0..m).map(|i| episode_seed(base, i)).collect()
}

/// Smoothed stochastic gradient descent with averaging, projected onto `θ ≥ 0`.
///
/// Perturbed points `θ + ηυ` are clamped at zero before simulation because the
/// wind budget is undefined for negative factors.
pub fn tune_sgd(
    sampler: &dyn EpisodeSampler,
    objective: ObjectiveKind,
    config: &SgdConfig,
) -> Result<TuningReport, TuningError> {
    objective.validate()?;
    config.validate()?;
    let n = config.iterations;
    let mut rng = stream(config.seed, Purpose::Tuning, 0, 0);
    let stop = match config.stopping {
        StoppingRule::UpperHalf => rng.random_range(n.div_ceil(2)..=n),
        StoppingRule::Last => n,
    };
    let dim = config.initial.dim();
    let mut theta = config.initial.components();
    let mut gbar = vec![0.0; dim];
    let mut trace = Vec::with_capacity(stop);
    let mut gradient_norms = Vec::with_capacity(stop);
    for k in 1..=stop {
        let psi = config.step.at(k);
        let phi = config.averaging.at(k);
        let eta = config.smoothing.at(k);
        for i in 0..dim {
            let y = theta[i] - psi * gbar[i];
            theta[i] = ((1.0 - phi) * theta[i] + phi * y).max(0.0);
        }

        let mut dir_rng = stream(config.seed, Purpose::Tuning, k as u64, 1);
        let upsilon: Vec<f64> = (0..dim).map(|_| dir_rng.sample(StandardNormal)).collect();
        let perturbed: Vec<f64> = theta
            .iter()
            .zip(&upsilon)
            .map(|(t, u)| (t + eta * u).max(0.0))
            .collect();
        let seeds = seeds_for_iteration(config.seed, k, config.batch_size);
        let current = config.initial.with_components(&theta);
        let base = objective.apply(&outcomes(sampler, &current, &seeds, k)?);
        let shifted = objective.apply(&outcomes(sampler, &config.initial.with_components(&perturbed), &seeds, k)?);
        let scale = (shifted - base) / eta;
        let g: Vec<f64> = upsilon.iter().map(|u| scale * u).collect();
        for i in 0..dim {
            gbar[i] = (1.0 - phi) * gbar[i] + phi * g[i];
        }
        gradient_norms.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        trace.push(TraceEntry {
            iteration: k,
            theta: theta.clone(),
            estimate: base,
            averaged_gradient: gbar.clone(),
        });
    }
    Ok(TuningReport {
        theta: config.initial.with_components(&theta),
        trace,
        gradient_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(target: f64) -> QuadraticSampler {
        QuadraticSampler { target: vec![target] }
    }

    #[test]
    fn schedules_evaluate() {
        assert_eq!(Schedule::Constant { value: 0.1 }.at(5), 0.1);
        assert!((Schedule::Power { scale: 0.1, exponent: 0.5 }.at(4) - 0.05).abs() < 1e-15);
        assert_eq!(Schedule::Harmonic { numerator: 2.0, offset: 2.0 }.at(2), 0.5);
    }

    #[test]
    fn grid_prefers_first_of_ties() {
        let grid = vec![Theta::Constant(2.0), Theta::Constant(0.0), Theta::Constant(1.5)];
        let r = tune_grid(&quad(1.0), ObjectiveKind::ExpectedCost, &grid, 2, 0).unwrap();
        assert_eq!(r.theta, Theta::Constant(1.5));
        let r = tune_grid(&quad(1.0), ObjectiveKind::ExpectedCost, &grid[..2], 2, 0).unwrap();
        assert_eq!(r.theta, Theta::Constant(2.0));
        assert_eq!(r.trace.len(), 2);
        let r = tune_grid(&quad(1.0), ObjectiveKind::ExpectedCost, &[Theta::Constant(0.7)], 1, 0).unwrap();
        assert_eq!(r.theta, Theta::Constant(0.7));
        assert!(tune_grid(&quad(1.0), ObjectiveKind::ExpectedCost, &[], 1, 0).is_err());
    }

    #[test]
    fn frozen_step_keeps_initial_theta() {
        let mut cfg = SgdConfig::with_defaults(Theta::Constant(0.3), 5);
        cfg.iterations = 50;
        cfg.step = Schedule::Constant { value: 1e-12 };
        let r = tune_sgd(&quad(1.0), ObjectiveKind::ExpectedCost, &cfg).unwrap();
        assert!((r.theta.components()[0] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn recursion_identity_holds_without_projection() {
        let mut cfg = SgdConfig::with_defaults(Theta::Constant(3.0), 2);
        cfg.iterations = 200;
        cfg.stopping = StoppingRule::Last;
        let r = tune_sgd(&quad(1.0), ObjectiveKind::ExpectedCost, &cfg).unwrap();
        assert_eq!(r.trace.len(), 200);
        assert_eq!(r.gradient_norms.len(), 200);
        let mut prev = (vec![3.0], vec![0.0]);
        for e in &r.trace {
            let k = e.iteration;
            let step = cfg.averaging.at(k) * cfg.step.at(k);
            assert!(e.theta[0] > 0.0);
            assert!((e.theta[0] - prev.0[0] + step * prev.1[0]).abs() < 1e-12);
            prev = (e.theta.clone(), e.averaged_gradient.clone());
        }
    }

    struct Broken;

    impl EpisodeSampler for Broken {
        fn outcome(&self, _: &Theta, _: u64) -> Result<Outcome, TuningError> {
            Ok(Outcome { cost: f64::NAN, loss: 0.0 })
        }
    }

    #[test]
    fn non_finite_sample_names_iteration_and_seed() {
        let cfg = SgdConfig::with_defaults(Theta::Constant(0.5), 1);
        match tune_sgd(&Broken, ObjectiveKind::ExpectedCost, &cfg) {
            Err(TuningError::NonFinite { iteration: 1, seed }) => {
                assert_eq!(seed, seeds_for_iteration(1, 1, 10)[0])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn objective_kinds_agree_where_they_should() {
        let s = quad(1.0);
        let t = Theta::Constant(0.0);
        let mean = evaluate_objective(&s, ObjectiveKind::ExpectedCost, &t, 3, 1).unwrap();
        let cvar0 = evaluate_objective(&s, ObjectiveKind::CvarCost { alpha: 0.0 }, &t, 3, 1).unwrap();
        assert_eq!(mean, cvar0);
        let b = evaluate_objective(&s, ObjectiveKind::BpoeLoss { zeta: 2.0 }, &t, 3, 1).unwrap();
        assert_eq!(b, 0.0);
        assert!(evaluate_objective(&s, ObjectiveKind::CvarCost { alpha: 1.0 }, &t, 3, 1).is_err());
    }
}
