//! Empirical risk measures over equally weighted samples, and LP epigraph
//! fragments that embed CVaR and buffered probability of exceedance into a
//! larger minimization.

use thiserror::Error;

use crate::lp::{LinExpr, LpModel, Sense, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample value {0} is not finite")]
    NonFinite(f64),
    #[error("risk level {0} outside [0, 1)")]
    InvalidLevel(f64),
    #[error("threshold {0} is not finite")]
    InvalidThreshold(f64),
    #[error("fixed gamma {0} must be finite and nonnegative")]
    InvalidGamma(f64),
    #[error("a variable gamma requires constant losses; scenario {0} depends on decisions")]
    BilinearLoss(usize),
}

/// Nonempty, finite, equally weighted outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
    sorted: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::EmptySample);
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(RiskError::NonFinite(bad));
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { values, sorted })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values in ascending order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.len() - 1]
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }
}

/// Risk level `α ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self, RiskError> {
        if (0.0..1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(RiskError::InvalidLevel(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Finite exceedance threshold `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(zeta: f64) -> Result<Self, RiskError> {
        if zeta.is_finite() {
            Ok(Self(zeta))
        } else {
            Err(RiskError::InvalidThreshold(zeta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// Guards `ceil(α·n)` against round-off such as 0.3·10 = 3.0000000000000004.
const LEVEL_SLACK: f64 = 1e-9;

/// Smallest sample value `z` with empirical `P(X ≤ z) ≥ α`: the `⌈α·n⌉`-th
/// order statistic, and the minimum at `α = 0`. Levels of 1 and above return
/// the maximum.
pub fn var(sample: &Sample, alpha: f64) -> f64 {
    let n = sample.len();
    let k = ((alpha * n as f64) - LEVEL_SLACK).ceil().max(1.0) as usize;
    sample.sorted[k.min(n) - 1]
}

/// Mean of the worst `(1 − α)` fraction of the sample, splitting the boundary
/// atom fractionally. Equals `min_z z + E[(X − z)⁺]/(1 − α)`.
pub fn cvar(sample: &Sample, alpha: RiskLevel) -> f64 {
    let n = sample.len() as f64;
    let tail = (1.0 - alpha.value()) * n;
    let mut remaining = tail;
    let mut acc = 0.0;
    for &x in sample.sorted.iter().rev() {
        if remaining <= 0.0 {
            break;
        }
        let w = remaining.min(1.0);
        acc += w * x;
        remaining -= w;
    }
    acc / tail
}

/// Fraction of values strictly above `zeta`.
pub fn poe(sample: &Sample, zeta: f64) -> f64 {
    let above = sample.sorted.len() - sample.sorted.partition_point(|&x| x <= zeta);
    above as f64 / sample.len() as f64
}

/// Buffered probability of exceedance `min_{γ≥0} E[(γ(X − ζ) + 1)⁺]`.
///
/// The objective is convex and piecewise linear in `γ`, so the minimum is
/// attained at `γ = 0`, at a breakpoint `1/(ζ − xᵢ)` for some `xᵢ < ζ`, or in
/// the limit `γ → ∞` (which is finite only when `ζ ≥ max`).
pub fn bpoe(sample: &Sample, zeta: Threshold) -> f64 {
    let zeta = zeta.value();
    let xs = &sample.sorted;
    let n = xs.len();
    let nf = n as f64;
    if zeta > sample.max() {
        return 0.0;
    }
    let mut best: f64 = 1.0;
    if zeta == sample.max() {
        let at_max = xs.iter().rev().take_while(|&&x| x == zeta).count();
        best = best.min(at_max as f64 / nf);
    }
    // suffix[i] = Σ_{j ≥ i} x_j
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + xs[i];
    }
    let mut i = 0;
    while i < n && xs[i] < zeta {
        // Terms with x_j ≤ x_i vanish at γ = 1/(ζ − x_i).
        let mut next = i + 1;
        while next < n && xs[next] == xs[i] {
            next += 1;
        }
        let gamma = 1.0 / (zeta - xs[i]);
        let count = (n - next) as f64;
        let value = (gamma * (suffix[next] - count * zeta) + count) / nf;
        best = best.min(value);
        i = next;
    }
    best.max(0.0)
}

/// Variables added by [`cvar_epigraph`].
#[derive(Debug, Clone)]
pub struct CvarFragment {
    pub z: VarId,
    pub excess: Vec<VarId>,
    /// Objective constant contributed by the fragment (always zero for CVaR).
    pub objective_constant: f64,
}

/// Appends the Rockafellar–Uryasev epigraph of `CVaR_α` over the scenario
/// costs: free `z`, `y_ω ≥ 0`, rows `C_ω − z − y_ω ≤ 0`, and objective
/// `weight · (z + Σ y_ω / ((1 − α)|Ω|))`.
pub fn cvar_epigraph(
    model: &mut LpModel,
    costs: &[LinExpr],
    alpha: RiskLevel,
    weight: f64,
) -> Result<CvarFragment, RiskError> {
    if costs.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let n = costs.len() as f64;
    let z = model.add_var("cvar_z", f64::NEG_INFINITY, f64::INFINITY);
    model.add_objective(z, weight);
    let scale = weight / ((1.0 - alpha.value()) * n);
    let mut excess = Vec::with_capacity(costs.len());
    for (w, cost) in costs.iter().enumerate() {
        let y = model.add_var(format!("cvar_y[{w}]"), 0.0, f64::INFINITY);
        model.add_objective(y, scale);
        let mut row = cost.clone();
        row.add_term(z, -1.0).add_term(y, -1.0);
        model.add_expr_constraint(&row, Sense::Le, 0.0);
        excess.push(y);
    }
    Ok(CvarFragment {
        z,
        excess,
        objective_constant: 0.0,
    })
}

/// The scaling variable of the bPOE representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// Fixed `γ ≥ 0`; the rows stay linear in decision variables.
    Fixed(f64),
    /// `γ` is an LP variable; only valid when every loss is a constant.
    Variable,
}

/// Variables added by [`bpoe_epigraph`].
#[derive(Debug, Clone)]
pub struct BpoeFragment {
    pub gamma: Option<VarId>,
    pub eta: Vec<VarId>,
}

/// Appends `η_ω ≥ 0`, rows `γ·L_ω − γ·ζ + 1 − η_ω ≤ 0`, and objective
/// `weight · Σ η_ω / |Ω|`.
pub fn bpoe_epigraph(
    model: &mut LpModel,
    losses: &[LinExpr],
    zeta: Threshold,
    gamma: Gamma,
    weight: f64,
) -> Result<BpoeFragment, RiskError> {
    if losses.is_empty() {
        return Err(RiskError::EmptySample);
    }
    let zeta = zeta.value();
    let n = losses.len() as f64;
    let gamma_var = match gamma {
        Gamma::Fixed(g) => {
            if !(g.is_finite() && g >= 0.0) {
                return Err(RiskError::InvalidGamma(g));
            }
            None
        }
        Gamma::Variable => {
            if let Some(w) = losses.iter().position(|l| !l.is_constant()) {
                return Err(RiskError::BilinearLoss(w));
            }
            Some(model.add_var("bpoe_gamma", 0.0, f64::INFINITY))
        }
    };
    let mut eta = Vec::with_capacity(losses.len());
    for (w, loss) in losses.iter().enumerate() {
        let e = model.add_var(format!("bpoe_eta[{w}]"), 0.0, f64::INFINITY);
        model.add_objective(e, weight / n);
        match (gamma, gamma_var) {
            (Gamma::Fixed(g), _) => {
                let mut row = loss.scaled(g);
                row.add_term(e, -1.0);
                model.add_expr_constraint(&row, Sense::Le, g * zeta - 1.0);
            }
            (Gamma::Variable, Some(gv)) => {
                model.add_constraint(vec![(gv, loss.constant - zeta), (e, -1.0)], Sense::Le, -1.0);
            }
            (Gamma::Variable, None) => unreachable!("variable gamma is always declared"),
        }
        eta.push(e);
    }
    Ok(BpoeFragment {
        gamma: gamma_var,
        eta,
    })
}
