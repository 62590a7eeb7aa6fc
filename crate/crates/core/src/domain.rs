//! Wind, battery and hydrogen system: state, dispatch decision, per-step
//! feasibility rows, storage transition, cost and unserved load.
//!
//! One step is one day; every "power" quantity is an energy-per-step amount.
//! Hydrogen storage and the fuel-cell flows `x^{hd}`, `x^{hr}` are measured in
//! hydrogen-equivalent energy and converted to electricity by the fuel-cell
//! efficiency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::Sense;

/// Tolerance for constraint checks performed outside the LP solver.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("decision violates {row} by {violation:.3e}")]
    Infeasible { row: &'static str, violation: f64 },
    #[error("{storage} level {level} outside [0, {capacity}]")]
    StorageOutOfBounds {
        storage: &'static str,
        level: f64,
        capacity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub battery_capacity: f64,
    pub hydrogen_capacity: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    pub fuel_cell_eff: f64,
    pub charge_limit: f64,
    pub discharge_limit: f64,
    /// Electric output limit of the fuel cell.
    pub fuel_cell_limit: f64,
    pub loss_penalty: f64,
    pub curtail_penalty: f64,
    /// Steps at which hydrogen may be purchased; length equals `episode_length`.
    pub acquisition_schedule: Vec<bool>,
    pub horizon: usize,
    pub episode_length: usize,
}

impl SystemParams {
    /// Parameters dimensioned off the peak demand: battery of four peak-days,
    /// hydrogen storage worth six peak-days of fuel-cell output, all ratings at
    /// peak, 98% battery and 60% fuel-cell efficiency, weekly acquisition from
    /// step 1.
    pub fn dimensioned(peak: f64, episode_length: usize, horizon: usize) -> Self {
        let fuel_cell_eff = 0.6;
        Self {
            battery_capacity: 4.0 * peak,
            hydrogen_capacity: 6.0 / fuel_cell_eff * peak,
            charge_eff: 0.98,
            discharge_eff: 0.98,
            fuel_cell_eff,
            charge_limit: peak,
            discharge_limit: peak,
            fuel_cell_limit: peak,
            loss_penalty: 1000.0,
            curtail_penalty: 800.0,
            acquisition_schedule: periodic_schedule(episode_length, 7, 1),
            horizon,
            episode_length,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let nonneg = [
            ("battery_capacity", self.battery_capacity),
            ("hydrogen_capacity", self.hydrogen_capacity),
            ("charge_limit", self.charge_limit),
            ("discharge_limit", self.discharge_limit),
            ("fuel_cell_limit", self.fuel_cell_limit),
            ("loss_penalty", self.loss_penalty),
            ("curtail_penalty", self.curtail_penalty),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DomainError::InvalidParams(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("charge_eff", self.charge_eff),
            ("discharge_eff", self.discharge_eff),
            ("fuel_cell_eff", self.fuel_cell_eff),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(DomainError::InvalidParams(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.episode_length == 0 {
            return Err(DomainError::InvalidParams("episode_length must be at least 1".into()));
        }
        if self.acquisition_schedule.len() != self.episode_length {
            return Err(DomainError::InvalidParams(format!(
                "acquisition schedule has {} entries, episode has {} steps",
                self.acquisition_schedule.len(),
                self.episode_length
            )));
        }
        Ok(())
    }

    pub fn acquisition_allowed(&self, t: usize) -> bool {
        self.acquisition_schedule.get(t).copied().unwrap_or(false)
    }
}

/// `schedule[t]` is true for `t = start, start + interval, ...`.
pub fn periodic_schedule(len: usize, interval: usize, start: usize) -> Vec<bool> {
    (0..len)
        .map(|t| interval > 0 && t >= start && (t - start).is_multiple_of(interval))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: usize,
    pub demand: f64,
    pub wind: f64,
    pub hydrogen_price: f64,
    pub battery_level: f64,
    pub hydrogen_level: f64,
}

impl SystemState {
    pub fn validate(&self, params: &SystemParams) -> Result<(), DomainError> {
        let tol = FEASIBILITY_TOL;
        let checks = [
            ("demand", self.demand, f64::INFINITY),
            ("wind", self.wind, f64::INFINITY),
            ("hydrogen_price", self.hydrogen_price, f64::INFINITY),
            ("battery_level", self.battery_level, params.battery_capacity + tol),
            ("hydrogen_level", self.hydrogen_level, params.hydrogen_capacity + tol),
        ];
        for (name, v, max) in checks {
            if !(v.is_finite() && v >= -tol && v <= max) {
                return Err(DomainError::InvalidState(format!("{name} = {v} out of range")));
            }
        }
        Ok(())
    }
}

/// Exogenous information revealed at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Exogenous {
    pub demand: f64,
    pub wind: f64,
    pub hydrogen_price: f64,
}

/// Dispatch decision of one step; all flows are nonnegative energies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Decision {
    pub wind_to_load: f64,
    pub battery_to_load: f64,
    pub fuel_cell_to_load: f64,
    pub wind_to_battery: f64,
    pub fuel_cell_to_battery: f64,
    pub hydrogen_purchase: f64,
    pub wind_curtailed: f64,
}

impl Decision {
    pub const LEN: usize = 7;

    /// Components in the order `(wd, rd, hd, wr, hr, h, wx)`.
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.wind_to_load,
            self.battery_to_load,
            self.fuel_cell_to_load,
            self.wind_to_battery,
            self.fuel_cell_to_battery,
            self.hydrogen_purchase,
            self.wind_curtailed,
        ]
    }

    pub fn from_array(x: [f64; 7]) -> Self {
        Self {
            wind_to_load: x[0],
            battery_to_load: x[1],
            fuel_cell_to_load: x[2],
            wind_to_battery: x[3],
            fuel_cell_to_battery: x[4],
            hydrogen_purchase: x[5],
            wind_curtailed: x[6],
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_array(self.to_array().map(|v| a * v))
    }

    pub fn plus(&self, other: &Decision) -> Self {
        let (a, b) = (self.to_array(), other.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

/// One linear row over the seven decision components.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: &'static str,
    pub coeffs: [f64; 7],
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, d: &Decision) -> f64 {
        self.coeffs.iter().zip(d.to_array()).map(|(a, x)| a * x).sum()
    }

    pub fn violation(&self, d: &Decision) -> f64 {
        let lhs = self.lhs(d);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

const WD: usize = 0;
const RD: usize = 1;
const HD: usize = 2;
const WR: usize = 3;
const HR: usize = 4;
const H: usize = 5;
const WX: usize = 6;

fn row(label: &'static str, terms: &[(usize, f64)], sense: Sense, rhs: f64) -> Row {
    let mut coeffs = [0.0; 7];
    for &(i, a) in terms {
        coeffs[i] += a;
    }
    Row {
        label,
        coeffs,
        sense,
        rhs,
    }
}

/// Single-step feasibility rows (wind budget through nonnegativity) at `state`.
pub fn feasibility_rows(
    state: &SystemState,
    params: &SystemParams,
    acquisition_allowed: bool,
) -> Result<Vec<Row>, DomainError> {
    state.validate(params)?;
    let p = params;
    let gate = if acquisition_allowed { p.hydrogen_capacity } else { 0.0 };
    let mut rows = vec![
        row("wind budget", &[(WR, 1.0), (WD, 1.0), (WX, 1.0)], Sense::Le, state.wind),
        row(
            "supply not above demand",
            &[(WD, 1.0), (RD, p.discharge_eff), (HD, p.fuel_cell_eff)],
            Sense::Le,
            state.demand,
        ),
        row("acquisition gating", &[(H, 1.0)], Sense::Le, gate),
        row("battery draw", &[(RD, 1.0)], Sense::Le, state.battery_level),
        row("hydrogen draw", &[(HR, 1.0), (HD, 1.0)], Sense::Le, state.hydrogen_level),
        row(
            "hydrogen headroom",
            &[(H, 1.0)],
            Sense::Le,
            p.hydrogen_capacity - state.hydrogen_level,
        ),
        row(
            "battery headroom",
            &[
                (WR, p.charge_eff),
                (HR, p.charge_eff * p.fuel_cell_eff),
                (RD, -1.0),
            ],
            Sense::Le,
            p.battery_capacity - state.battery_level,
        ),
        row(
            "charge rating",
            &[(WR, 1.0), (HR, p.fuel_cell_eff)],
            Sense::Le,
            p.charge_limit,
        ),
        row("discharge rating", &[(RD, 1.0)], Sense::Le, p.discharge_limit),
        row(
            "fuel cell rating",
            &[(HR, p.fuel_cell_eff), (HD, p.fuel_cell_eff)],
            Sense::Le,
            p.fuel_cell_limit,
        ),
    ];
    const NONNEG: [&str; 7] = [
        "nonnegative wd",
        "nonnegative rd",
        "nonnegative hd",
        "nonnegative wr",
        "nonnegative hr",
        "nonnegative h",
        "nonnegative wx",
    ];
    for (i, label) in NONNEG.into_iter().enumerate() {
        rows.push(row(label, &[(i, 1.0)], Sense::Ge, 0.0));
    }
    Ok(rows)
}

/// Checks every feasibility row at tolerance `tol`, reporting the worst violation.
pub fn check_feasible(
    state: &SystemState,
    params: &SystemParams,
    acquisition_allowed: bool,
    decision: &Decision,
    tol: f64,
) -> Result<(), DomainError> {
    let rows = feasibility_rows(state, params, acquisition_allowed)?;
    let worst = rows
        .iter()
        .map(|r| (r.label, r.violation(decision)))
        .fold(("", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if worst.1 > tol {
        return Err(DomainError::Infeasible {
            row: worst.0,
            violation: worst.1,
        });
    }
    Ok(())
}

/// Storage levels after applying `decision`: `(battery, hydrogen)`.
pub fn storage_after(state: &SystemState, decision: &Decision, params: &SystemParams) -> (f64, f64) {
    let battery = state.battery_level - decision.battery_to_load
        + params.charge_eff
            * (decision.wind_to_battery + params.fuel_cell_eff * decision.fuel_cell_to_battery);
    let hydrogen = state.hydrogen_level - decision.fuel_cell_to_load - decision.fuel_cell_to_battery
        + decision.hydrogen_purchase;
    (battery, hydrogen)
}

/// Applies the storage transition and reveals `next` exogenous information.
pub fn transition(
    state: &SystemState,
    decision: &Decision,
    params: &SystemParams,
    next: Exogenous,
) -> Result<SystemState, DomainError> {
    let (battery, hydrogen) = storage_after(state, decision, params);
    for (storage, level, capacity) in [
        ("battery", battery, params.battery_capacity),
        ("hydrogen", hydrogen, params.hydrogen_capacity),
    ] {
        if !(level >= -FEASIBILITY_TOL && level <= capacity + FEASIBILITY_TOL) {
            return Err(DomainError::StorageOutOfBounds {
                storage,
                level,
                capacity,
            });
        }
    }
    Ok(SystemState {
        t: state.t + 1,
        demand: next.demand,
        wind: next.wind,
        hydrogen_price: next.hydrogen_price,
        battery_level: battery,
        hydrogen_level: hydrogen,
    })
}

/// Demand minus the electricity delivered to load.
pub fn unserved_load(state: &SystemState, decision: &Decision, params: &SystemParams) -> f64 {
    state.demand
        - (decision.wind_to_load
            + params.discharge_eff * decision.battery_to_load
            + params.fuel_cell_eff * decision.fuel_cell_to_load)
}

pub fn stage_cost(state: &SystemState, decision: &Decision, params: &SystemParams) -> f64 {
    params.loss_penalty * unserved_load(state, decision, params)
        + params.curtail_penalty * decision.wind_curtailed
        + state.hydrogen_price * decision.hydrogen_purchase
}
