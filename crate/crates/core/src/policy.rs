//! Look-ahead policies.
//!
//! Every policy solves one or more look-ahead LPs over the current step `t`
//! and the future steps `t+1 ..= min(t+H, T−1)` and implements only the
//! stage-`t` part of the solution.
//!
//! In the stochastic look-ahead, storage, fuel-cell and purchase flows are
//! shared by all scenarios, while wind-to-load adapts per scenario. A shared
//! wind-to-battery flow must therefore fit the smallest wind path. Look-ahead
//! curtailment is dropped from the model: spilling wind is free in the wind
//! budget row and curtailment carries a nonnegative penalty, so it is zero at
//! some optimum. The stage-`t` curtailment variable is kept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{check_feasible, Decision, DomainError, SystemParams, SystemState, FEASIBILITY_TOL};
use crate::forecast::ScenarioFan;
use crate::lp::{self, LinExpr, LpError, LpModel, LpStatus, Sense, VarId};
use crate::risk::{self, Gamma, RiskError, RiskLevel, Threshold};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("look-ahead LP is {0:?}")]
    Status(LpStatus),
    #[error("invalid policy input: {0}")]
    Input(String),
    #[error("policy returned an infeasible decision: {0}")]
    Audit(DomainError),
}

/// Discount applied to forecast wind in the deterministic look-ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta {
    Constant(f64),
    /// One factor per lead time `τ = 1..=H`.
    LookupTable(Vec<f64>),
}

impl Theta {
    pub fn validate(&self, horizon: usize) -> Result<(), PolicyError> {
        if let Theta::LookupTable(v) = self {
            if v.len() != horizon {
                return Err(PolicyError::Input(format!(
                    "look-up table has {} entries, horizon is {horizon}",
                    v.len()
                )));
            }
        }
        self.validate_entries()
    }

    fn validate_entries(&self) -> Result<(), PolicyError> {
        match self.components().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            Some(bad) => Err(PolicyError::Input(format!(
                "theta entries must be finite and nonnegative, got {bad}"
            ))),
            None => Ok(()),
        }
    }

    /// Factor for lead time `tau ≥ 1`.
    pub fn factor(&self, tau: usize) -> f64 {
        match self {
            Theta::Constant(v) => *v,
            Theta::LookupTable(v) => v[tau - 1],
        }
    }

    /// Wind budget `b(f, θ)` at lead time `tau`.
    pub fn budget(&self, forecast: f64, tau: usize) -> f64 {
        self.factor(tau) * forecast
    }

    pub fn components(&self) -> Vec<f64> {
        match self {
            Theta::Constant(v) => vec![*v],
            Theta::LookupTable(v) => v.clone(),
        }
    }

    /// Same shape as `self` with new components.
    pub fn with_components(&self, values: &[f64]) -> Theta {
        match self {
            Theta::Constant(_) => Theta::Constant(values[0]),
            Theta::LookupTable(_) => Theta::LookupTable(values.to_vec()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Theta::Constant(_) => 1,
            Theta::LookupTable(v) => v.len(),
        }
    }
}

/// Known data of one look-ahead step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookaheadStep {
    pub demand: f64,
    pub hydrogen_price: f64,
    pub acquisition: bool,
}

/// Outer search over the bPOE scaling variable `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSearch {
    pub grid: Vec<f64>,
    /// Golden-section iterations around the best grid point.
    pub refine_iterations: usize,
}

impl Default for GammaSearch {
    /// `{0}` plus 33 log-spaced points on `[1e-4, 1e2]`, refined by 20 golden-section steps.
    fn default() -> Self {
        Self::log_spaced(1e-4, 1e2, 33, 20)
    }
}

impl GammaSearch {
    pub fn log_spaced(lo: f64, hi: f64, count: usize, refine_iterations: usize) -> Self {
        let mut grid = vec![0.0];
        let (a, b) = (lo.ln(), hi.ln());
        for i in 0..count {
            let s = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            grid.push((a + s * (b - a)).exp());
        }
        Self { grid, refine_iterations }
    }

    pub fn fixed(grid: Vec<f64>) -> Self {
        Self {
            grid,
            refine_iterations: 0,
        }
    }
}

pub const DEFAULT_BIG_M: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "default_big_m")]
    pub big_m: f64,
    #[serde(default)]
    pub gamma: GammaSearch,
}

fn default_big_m() -> f64 {
    DEFAULT_BIG_M
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            zeta: 0.0,
            big_m: DEFAULT_BIG_M,
            gamma: GammaSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub decision: Decision,
    /// Optimal look-ahead objective including constant terms.
    pub lookahead_objective: f64,
    /// Look-ahead cost of each scenario, excluding the stage-`t` cost.
    pub scenario_costs: Vec<f64>,
    /// Cumulative look-ahead unserved load of each scenario.
    pub scenario_losses: Vec<f64>,
    /// Selected `γ` for the bPOE policy.
    pub gamma: Option<f64>,
}

struct Lookahead {
    model: LpModel,
    stage: [VarId; 7],
    stage_cost: LinExpr,
    scenario_costs: Vec<LinExpr>,
    scenario_losses: Vec<LinExpr>,
}

fn check_inputs(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    wind: &[Vec<f64>],
) -> Result<(), PolicyError> {
    params.validate()?;
    state.validate(params)?;
    if wind.is_empty() {
        return Err(PolicyError::Input("at least one wind path is required".into()));
    }
    for (w, path) in wind.iter().enumerate() {
        if path.len() != future.len() {
            return Err(PolicyError::Input(format!(
                "wind path {w} has {} steps, look-ahead has {}",
                path.len(),
                future.len()
            )));
        }
        if let Some(v) = path.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PolicyError::Input(format!("wind path {w} contains {v}")));
        }
    }
    for step in future {
        if !(step.demand.is_finite() && step.demand >= 0.0 && step.hydrogen_price.is_finite() && step.hydrogen_price >= 0.0) {
            return Err(PolicyError::Input(format!("invalid look-ahead step {step:?}")));
        }
    }
    Ok(())
}

/// Builds the shared feasible set; the objective is left empty.
fn build(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    wind: &[Vec<f64>],
) -> Lookahead {
    let p = params;
    let bc = p.charge_eff;
    let bd = p.discharge_eff;
    let bh = p.fuel_cell_eff;
    let inf = f64::INFINITY;
    let mut m = LpModel::new();

    let gate = if p.acquisition_allowed(state.t) { p.hydrogen_capacity } else { 0.0 };
    let wd = m.add_var("wd", 0.0, inf);
    let rd = m.add_var("rd", 0.0, state.battery_level.min(p.discharge_limit).max(0.0));
    let hd = m.add_var("hd", 0.0, inf);
    let wr = m.add_var("wr", 0.0, inf);
    let hr = m.add_var("hr", 0.0, inf);
    let h = m.add_var("h", 0.0, gate.min(p.hydrogen_capacity - state.hydrogen_level).max(0.0));
    let wx = m.add_var("wx", 0.0, inf);
    m.add_constraint(vec![(wd, 1.0), (wr, 1.0), (wx, 1.0)], Sense::Le, state.wind);
    m.add_constraint(vec![(wd, 1.0), (rd, bd), (hd, bh)], Sense::Le, state.demand);
    m.add_constraint(vec![(hr, 1.0), (hd, 1.0)], Sense::Le, state.hydrogen_level);
    m.add_constraint(
        vec![(wr, bc), (hr, bc * bh), (rd, -1.0)],
        Sense::Le,
        p.battery_capacity - state.battery_level,
    );
    m.add_constraint(vec![(wr, 1.0), (hr, bh)], Sense::Le, p.charge_limit);
    m.add_constraint(vec![(hr, bh), (hd, bh)], Sense::Le, p.fuel_cell_limit);

    let mut stage_cost = LinExpr::constant(p.loss_penalty * state.demand);
    stage_cost
        .add_term(wd, -p.loss_penalty)
        .add_term(rd, -p.loss_penalty * bd)
        .add_term(hd, -p.loss_penalty * bh)
        .add_term(wx, p.curtail_penalty)
        .add_term(h, state.hydrogen_price);

    // Storage levels entering each look-ahead step, as affine expressions.
    let mut battery = LinExpr::constant(state.battery_level);
    battery.add_term(rd, -1.0).add_term(wr, bc).add_term(hr, bc * bh);
    let mut hydrogen = LinExpr::constant(state.hydrogen_level);
    hydrogen.add_term(hd, -1.0).add_term(hr, -1.0).add_term(h, 1.0);

    let n = wind.len();
    let mut scenario_costs = vec![LinExpr::new(); n];
    let mut scenario_losses = vec![LinExpr::new(); n];
    for (k, step) in future.iter().enumerate() {
        let gate = if step.acquisition { p.hydrogen_capacity } else { 0.0 };
        let rd = m.add_var(format!("rd[{k}]"), 0.0, p.discharge_limit);
        let hd = m.add_var(format!("hd[{k}]"), 0.0, inf);
        let wr = m.add_var(format!("wr[{k}]"), 0.0, inf);
        let hr = m.add_var(format!("hr[{k}]"), 0.0, inf);
        let h = m.add_var(format!("h[{k}]"), 0.0, gate);

        let mut row = battery.scaled(-1.0);
        row.add_term(rd, 1.0);
        m.add_expr_constraint(&row, Sense::Le, 0.0);
        let mut row = hydrogen.scaled(-1.0);
        row.add_term(hr, 1.0).add_term(hd, 1.0);
        m.add_expr_constraint(&row, Sense::Le, 0.0);
        let mut row = hydrogen.clone();
        row.add_term(h, 1.0);
        m.add_expr_constraint(&row, Sense::Le, p.hydrogen_capacity);
        let mut row = battery.clone();
        row.add_term(wr, bc).add_term(hr, bc * bh).add_term(rd, -1.0);
        m.add_expr_constraint(&row, Sense::Le, p.battery_capacity);
        m.add_constraint(vec![(wr, 1.0), (hr, bh)], Sense::Le, p.charge_limit);
        m.add_constraint(vec![(hr, bh), (hd, bh)], Sense::Le, p.fuel_cell_limit);

        for (w, path) in wind.iter().enumerate() {
            let wd = m.add_var(format!("wd[{w},{k}]"), 0.0, inf);
            m.add_constraint(vec![(wd, 1.0), (wr, 1.0)], Sense::Le, path[k]);
            m.add_constraint(vec![(wd, 1.0), (rd, bd), (hd, bh)], Sense::Le, step.demand);
            let mut loss = LinExpr::constant(step.demand);
            loss.add_term(wd, -1.0).add_term(rd, -bd).add_term(hd, -bh);
            scenario_costs[w].add_scaled(&loss, p.loss_penalty).add_term(h, step.hydrogen_price);
            scenario_losses[w].add_scaled(&loss, 1.0);
        }

        battery.add_term(rd, -1.0).add_term(wr, bc).add_term(hr, bc * bh);
        hydrogen.add_term(hd, -1.0).add_term(hr, -1.0).add_term(h, 1.0);
    }

    Lookahead {
        model: m,
        stage: [wd, rd, hd, wr, hr, h, wx],
        stage_cost,
        scenario_costs,
        scenario_losses,
    }
}

/// Adds `stage cost + mean scenario cost` to the objective; returns the constant.
fn expected_cost_objective(la: &mut Lookahead) -> f64 {
    let n = la.scenario_costs.len() as f64;
    let mut constant = la.model.add_objective_expr(&la.stage_cost, 1.0);
    for cost in &la.scenario_costs {
        constant += la.model.add_objective_expr(cost, 1.0 / n);
    }
    constant
}

fn finish(la: &Lookahead, objective_constant: f64, gamma: Option<f64>) -> Result<PolicyDecision, PolicyError> {
    let sol = lp::solve(&la.model)?;
    if sol.status != LpStatus::Optimal {
        return Err(PolicyError::Status(sol.status));
    }
    let x = &sol.primal;
    let decision = Decision::from_array(la.stage.map(|v| x[v.index()].max(0.0)));
    Ok(PolicyDecision {
        decision,
        lookahead_objective: sol.objective + objective_constant,
        scenario_costs: la.scenario_costs.iter().map(|c| c.eval(x)).collect(),
        scenario_losses: la.scenario_losses.iter().map(|c| c.eval(x)).collect(),
        gamma,
    })
}

/// Rejects a here-and-now decision that violates the stage rows.
fn audit(state: &SystemState, params: &SystemParams, d: PolicyDecision) -> Result<PolicyDecision, PolicyError> {
    check_feasible(state, params, params.acquisition_allowed(state.t), &d.decision, FEASIBILITY_TOL)
        .map_err(PolicyError::Audit)?;
    Ok(d)
}

/// Deterministic look-ahead on the point forecast with wind budgets `θ·f`.
pub fn decide_dla(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    point_forecast: &[f64],
    theta: &Theta,
) -> Result<PolicyDecision, PolicyError> {
    theta.validate_entries()?;
    if theta.dim() < future.len() && matches!(theta, Theta::LookupTable(_)) {
        return Err(PolicyError::Input(format!(
            "look-up table has {} entries, look-ahead has {} steps",
            theta.dim(),
            future.len()
        )));
    }
    if point_forecast.len() != future.len() {
        return Err(PolicyError::Input(format!(
            "point forecast has {} steps, look-ahead has {}",
            point_forecast.len(),
            future.len()
        )));
    }
    let budgets: Vec<f64> = point_forecast
        .iter()
        .enumerate()
        .map(|(k, &f)| theta.budget(f, k + 1))
        .collect();
    let wind = vec![budgets];
    check_inputs(state, params, future, &wind)?;
    let mut la = build(state, params, future, &wind);
    let constant = expected_cost_objective(&mut la);
    audit(state, params, finish(&la, constant, None)?)
}

fn fan_paths(fan: &ScenarioFan, future: &[LookaheadStep]) -> Result<Vec<Vec<f64>>, PolicyError> {
    if fan.is_empty() {
        return Err(PolicyError::Input("scenario fan is empty".into()));
    }
    if fan.horizon() < future.len() {
        return Err(PolicyError::Input(format!(
            "fan covers {} steps, look-ahead needs {}",
            fan.horizon(),
            future.len()
        )));
    }
    Ok(fan.paths.iter().map(|p| p[..future.len()].to_vec()).collect())
}

/// Risk-neutral two-stage look-ahead over the fan.
pub fn decide_sla(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    fan: &ScenarioFan,
) -> Result<PolicyDecision, PolicyError> {
    let wind = fan_paths(fan, future)?;
    check_inputs(state, params, future, &wind)?;
    let mut la = build(state, params, future, &wind);
    let constant = expected_cost_objective(&mut la);
    audit(state, params, finish(&la, constant, None)?)
}

/// Stage cost plus `CVaR_α` of the scenario look-ahead costs.
pub fn decide_scvar(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    fan: &ScenarioFan,
    alpha: f64,
) -> Result<PolicyDecision, PolicyError> {
    let alpha = RiskLevel::new(alpha)?;
    let wind = fan_paths(fan, future)?;
    check_inputs(state, params, future, &wind)?;
    let mut la = build(state, params, future, &wind);
    let constant = la.model.add_objective_expr(&la.stage_cost, 1.0);
    let costs = la.scenario_costs.clone();
    let fragment = risk::cvar_epigraph(&mut la.model, &costs, alpha, 1.0)?;
    audit(state, params, finish(&la, constant + fragment.objective_constant, None)?)
}

/// Expected cost plus `M` times the bPOE-style penalty of cumulative
/// look-ahead unserved load above `ζ`, searched over a fixed-`γ` family.
pub fn decide_sbpoe(
    state: &SystemState,
    params: &SystemParams,
    future: &[LookaheadStep],
    fan: &ScenarioFan,
    config: &RiskConfig,
) -> Result<PolicyDecision, PolicyError> {
    let zeta = Threshold::new(config.zeta)?;
    if !(config.big_m.is_finite() && config.big_m > 0.0) {
        return Err(PolicyError::Input(format!("big M must be positive, got {}", config.big_m)));
    }
    let grid = &config.gamma.grid;
    if grid.is_empty() || grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(PolicyError::Input("gamma grid must be nonempty, finite and nonnegative".into()));
    }
    let wind = fan_paths(fan, future)?;
    check_inputs(state, params, future, &wind)?;
    let base = build(state, params, future, &wind);

    let solve_at = |gamma: f64| -> Result<PolicyDecision, PolicyError> {
        let mut la = Lookahead {
            model: base.model.clone(),
            stage: base.stage,
            stage_cost: base.stage_cost.clone(),
            scenario_costs: base.scenario_costs.clone(),
            scenario_losses: base.scenario_losses.clone(),
        };
        let constant = expected_cost_objective(&mut la);
        let losses = la.scenario_losses.clone();
        risk::bpoe_epigraph(&mut la.model, &losses, zeta, Gamma::Fixed(gamma), config.big_m)?;
        finish(&la, constant, Some(gamma))
    };

    let results: Vec<Result<PolicyDecision, PolicyError>> = grid.par_iter().map(|&g| solve_at(g)).collect();
    let mut evaluated = Vec::with_capacity(grid.len());
    for (g, r) in grid.iter().zip(results) {
        evaluated.push((*g, r?));
    }
    let mut best = best_index(&evaluated);

    if config.gamma.refine_iterations > 0 {
        let mut sorted: Vec<f64> = grid.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let g0 = evaluated[best].0;
        let pos = sorted.iter().position(|&g| g == g0).unwrap_or(0);
        let lo = if pos > 0 { sorted[pos - 1] } else { g0 };
        let hi = sorted.get(pos + 1).copied().unwrap_or(g0);
        if hi > lo {
            // Search in log space when the bracket is away from zero.
            let log = lo > 0.0;
            let to = |v: f64| if log { v.ln() } else { v };
            let from = |v: f64| if log { v.exp() } else { v };
            let (mut a, mut b) = (to(lo), to(hi));
            let ratio = (5f64.sqrt() - 1.0) / 2.0;
            let mut c = b - ratio * (b - a);
            let mut d = a + ratio * (b - a);
            let mut fc = solve_at(from(c))?;
            let mut fd = solve_at(from(d))?;
            for _ in 0..config.gamma.refine_iterations {
                if fc.lookahead_objective <= fd.lookahead_objective {
                    evaluated.push((from(d), fd));
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = solve_at(from(c))?;
                } else {
                    evaluated.push((from(c), fc));
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = solve_at(from(d))?;
                }
            }
            evaluated.push((from(c), fc));
            evaluated.push((from(d), fd));
            best = best_index(&evaluated);
        }
    }
    let (_, decision) = evaluated.swap_remove(best);
    audit(state, params, decision)
}

/// First entry with the smallest objective.
fn best_index(evaluated: &[(f64, PolicyDecision)]) -> usize {
    let mut best = 0;
    for (i, (_, d)) in evaluated.iter().enumerate() {
        if d.lookahead_objective < evaluated[best].1.lookahead_objective {
            best = i;
        }
    }
    best
}

/// Inputs of one decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub state: &'a SystemState,
    pub params: &'a SystemParams,
    pub future: &'a [LookaheadStep],
    /// Point forecast per look-ahead step.
    pub point_forecast: &'a [f64],
    /// Sampled paths, present when the policy asked for a fan.
    pub fan: Option<&'a ScenarioFan>,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    /// Number of wind paths the policy needs per decision; zero for none.
    fn fan_size(&self) -> usize;
    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError>;
}

/// The configurable policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Dla {
        theta: Theta,
    },
    Sla {
        scenarios: usize,
    },
    Scvar {
        scenarios: usize,
        alpha: f64,
    },
    Sbpoe {
        scenarios: usize,
        #[serde(flatten)]
        risk: RiskConfig,
    },
}

impl PolicySpec {
    pub fn validate(&self, horizon: usize) -> Result<(), PolicyError> {
        match self {
            PolicySpec::Dla { theta } => theta.validate(horizon),
            PolicySpec::Sla { scenarios } | PolicySpec::Scvar { scenarios, .. } | PolicySpec::Sbpoe { scenarios, .. }
                if *scenarios == 0 =>
            {
                Err(PolicyError::Input("scenario count must be at least 1".into()))
            }
            PolicySpec::Scvar { alpha, .. } => RiskLevel::new(*alpha).map(|_| ()).map_err(Into::into),
            PolicySpec::Sbpoe { risk, .. } => Threshold::new(risk.zeta).map(|_| ()).map_err(Into::into),
            PolicySpec::Sla { .. } => Ok(()),
        }
    }
}

fn fmt_theta(theta: &Theta) -> String {
    theta
        .components()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

impl Policy for PolicySpec {
    fn name(&self) -> String {
        match self {
            PolicySpec::Dla { theta } => format!("D-LA(theta={})", fmt_theta(theta)),
            PolicySpec::Sla { .. } => "S-LA".into(),
            PolicySpec::Scvar { alpha, .. } => format!("S-CVaR(alpha={alpha})"),
            PolicySpec::Sbpoe { risk, .. } => format!("S-BPoE(zeta={})", risk.zeta),
        }
    }

    fn fan_size(&self) -> usize {
        match self {
            PolicySpec::Dla { .. } => 0,
            PolicySpec::Sla { scenarios } | PolicySpec::Scvar { scenarios, .. } | PolicySpec::Sbpoe { scenarios, .. } => {
                *scenarios
            }
        }
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Result<PolicyDecision, PolicyError> {
        let fan = || ctx.fan.ok_or_else(|| PolicyError::Input("policy needs a scenario fan".into()));
        match self {
            PolicySpec::Dla { theta } => decide_dla(ctx.state, ctx.params, ctx.future, ctx.point_forecast, theta),
            PolicySpec::Sla { .. } => decide_sla(ctx.state, ctx.params, ctx.future, fan()?),
            PolicySpec::Scvar { alpha, .. } => decide_scvar(ctx.state, ctx.params, ctx.future, fan()?, *alpha),
            PolicySpec::Sbpoe { risk, .. } => decide_sbpoe(ctx.state, ctx.params, ctx.future, fan()?, risk),
        }
    }
}
