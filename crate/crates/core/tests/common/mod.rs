#![allow(dead_code)]

use riskla::domain::{SystemParams, SystemState};
use riskla::lp::{solve, LpModel, LpStatus, Sense};
use riskla::policy::LookaheadStep;
use riskla::sim::Instance;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `min_z z + mean((x − z)⁺)/(1 − α)`, scanning `z` over the sample values.
pub fn cvar_by_scan(xs: &[f64], alpha: f64) -> f64 {
    xs.iter()
        .map(|&z| z + xs.iter().map(|&x| (x - z).max(0.0)).sum::<f64>() / ((1.0 - alpha) * xs.len() as f64))
        .fold(f64::INFINITY, f64::min)
}

/// bPOE as `1 − α` where `CVaR_α = ζ`, found by bisection on `α`.
pub fn bpoe_by_inversion(xs: &[f64], zeta: f64) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if zeta > max {
        return 0.0;
    }
    if zeta == max {
        return xs.iter().filter(|&&x| x == max).count() as f64 / xs.len() as f64;
    }
    if zeta <= mean(xs) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid >= 1.0 || cvar_by_scan(xs, mid) > zeta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    1.0 - 0.5 * (lo + hi)
}

/// `min_γ mean((γ(x − ζ) + 1)⁺)` over `γ = 0`, every breakpoint, and `γ → ∞`.
pub fn bpoe_by_gamma_scan(xs: &[f64], zeta: f64) -> f64 {
    let value = |g: f64| mean(&xs.iter().map(|&x| (g * (x - zeta) + 1.0).max(0.0)).collect::<Vec<_>>());
    let mut best = value(0.0);
    for &x in xs {
        if x < zeta {
            best = best.min(value(1.0 / (zeta - x)));
        }
    }
    if xs.iter().all(|&x| x <= zeta) {
        let at = xs.iter().filter(|&&x| x == zeta).count() as f64 / xs.len() as f64;
        best = best.min(at);
    }
    best
}

/// Full-information optimum of a deterministic episode with wind `wind[t]`,
/// written with explicit storage-level variables and balance equalities.
pub fn clairvoyant_cost(instance: &Instance, wind: &[f64]) -> f64 {
    let p = &instance.params;
    let len = p.episode_length;
    let inf = f64::INFINITY;
    let mut m = LpModel::new();
    let mut battery = m.add_var("RE0", instance.initial_battery, instance.initial_battery);
    let mut hydrogen = m.add_var("RH0", instance.initial_hydrogen, instance.initial_hydrogen);
    for (t, &wind_t) in wind.iter().enumerate().take(len) {
        let d = instance.series.demand[t];
        let price = instance.series.hydrogen_price[t];
        let gate = if p.acquisition_allowed(t) { p.hydrogen_capacity } else { 0.0 };
        let wd = m.add_var("wd", 0.0, inf);
        let rd = m.add_var("rd", 0.0, inf);
        let hd = m.add_var("hd", 0.0, inf);
        let wr = m.add_var("wr", 0.0, inf);
        let hr = m.add_var("hr", 0.0, inf);
        let h = m.add_var("h", 0.0, inf);
        let wx = m.add_var("wx", 0.0, inf);
        let loss = m.add_var("loss", 0.0, inf);
        m.add_constraint(vec![(wd, 1.0), (wr, 1.0), (wx, 1.0)], Sense::Le, wind_t);
        m.add_constraint(vec![(loss, 1.0), (wd, 1.0), (rd, p.discharge_eff), (hd, p.fuel_cell_eff)], Sense::Eq, d);
        m.add_constraint(vec![(h, 1.0)], Sense::Le, gate);
        m.add_constraint(vec![(h, 1.0), (hydrogen, 1.0)], Sense::Le, p.hydrogen_capacity);
        m.add_constraint(vec![(rd, 1.0), (battery, -1.0)], Sense::Le, 0.0);
        m.add_constraint(vec![(hd, 1.0), (hr, 1.0), (hydrogen, -1.0)], Sense::Le, 0.0);
        m.add_constraint(vec![(wr, 1.0), (hr, p.fuel_cell_eff)], Sense::Le, p.charge_limit);
        m.add_constraint(vec![(rd, 1.0)], Sense::Le, p.discharge_limit);
        m.add_constraint(vec![(hd, p.fuel_cell_eff), (hr, p.fuel_cell_eff)], Sense::Le, p.fuel_cell_limit);
        let next_b = m.add_var("RE", 0.0, p.battery_capacity);
        let next_h = m.add_var("RH", 0.0, p.hydrogen_capacity);
        m.add_constraint(
            vec![
                (next_b, 1.0),
                (battery, -1.0),
                (rd, 1.0),
                (wr, -p.charge_eff),
                (hr, -p.charge_eff * p.fuel_cell_eff),
            ],
            Sense::Eq,
            0.0,
        );
        m.add_constraint(
            vec![(next_h, 1.0), (hydrogen, -1.0), (hd, 1.0), (hr, 1.0), (h, -1.0)],
            Sense::Eq,
            0.0,
        );
        m.set_objective(loss, p.loss_penalty);
        m.set_objective(wx, p.curtail_penalty);
        m.set_objective(h, price);
        battery = next_b;
        hydrogen = next_h;
    }
    let sol = solve(&m).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    sol.objective
}

/// Tiny instance for brute-force checks: no battery, empty hydrogen store that
/// can only be filled now, one look-ahead step.
pub struct Tiny {
    pub params: SystemParams,
    pub state: SystemState,
    pub future: Vec<LookaheadStep>,
}

pub fn tiny(demand_now: f64, wind_now: f64, demand_next: f64, price: f64) -> Tiny {
    let params = SystemParams {
        battery_capacity: 0.0,
        hydrogen_capacity: 2.0,
        charge_eff: 1.0,
        discharge_eff: 1.0,
        fuel_cell_eff: 0.6,
        charge_limit: 1.0,
        discharge_limit: 1.0,
        fuel_cell_limit: 1.0,
        loss_penalty: 1.0,
        curtail_penalty: 0.5,
        acquisition_schedule: vec![true, false],
        horizon: 1,
        episode_length: 2,
    };
    let state = SystemState {
        t: 0,
        demand: demand_now,
        wind: wind_now,
        hydrogen_price: price,
        battery_level: 0.0,
        hydrogen_level: 0.0,
    };
    let future = vec![LookaheadStep {
        demand: demand_next,
        hydrogen_price: price,
        acquisition: false,
    }];
    Tiny { params, state, future }
}

pub const GRID_STEP: f64 = 1e-3;

impl Tiny {
    /// Calls `f(stage_cost, scenario_costs, scenario_losses)` for every grid
    /// point of the purchase `h` and next-step fuel-cell draw `hd ≤ h`, with
    /// wind-to-load set to its best response in each step and scenario.
    pub fn for_each_grid_point(&self, wind: &[f64], mut f: impl FnMut(f64, &[f64], &[f64])) {
        let p = &self.params;
        let s = &self.state;
        let next = &self.future[0];
        let bh = p.fuel_cell_eff;
        let stage_base = p.loss_penalty * (s.demand - s.wind.min(s.demand));
        let max_h = p.hydrogen_capacity;
        let max_hd = (p.fuel_cell_limit / bh).min(next.demand / bh);
        let steps_h = (max_h / GRID_STEP).round() as usize;
        let mut costs = vec![0.0; wind.len()];
        let mut losses = vec![0.0; wind.len()];
        for i in 0..=steps_h {
            let h = i as f64 * GRID_STEP;
            let stage = stage_base + s.hydrogen_price * h;
            let top = h.min(max_hd);
            let steps_hd = (top / GRID_STEP).floor() as usize;
            for j in 0..=steps_hd {
                let hd = j as f64 * GRID_STEP;
                for (w, &f) in wind.iter().enumerate() {
                    let wd = f.min(next.demand - bh * hd).max(0.0);
                    let loss = next.demand - wd - bh * hd;
                    losses[w] = loss;
                    costs[w] = p.loss_penalty * loss;
                }
                f(stage, &costs, &losses);
            }
        }
    }
}
