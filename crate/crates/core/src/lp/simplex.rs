use super::{LpError, LpModel, LpSolution, LpSolver, LpStatus, Sense};

/// Numerical tolerances of the simplex backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Phase-one residual above which a model is declared infeasible.
    pub feasibility: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot: f64,
    /// Reduced-cost threshold, relative to the largest objective coefficient.
    pub optimality: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Iteration cap; `None` derives one from the model size.
    pub max_iterations: Option<usize>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-6,
            pivot: 1e-9,
            optimality: 1e-9,
            bland_after: 50,
            max_iterations: None,
        }
    }
}

/// Dense bounded-variable primal simplex.
///
/// Entering columns are priced by Dantzig's rule; after a run of degenerate
/// pivots the solver falls back to Bland's smallest-index rule until the
/// objective moves again.
#[derive(Debug, Clone, Copy, Default)]
pub struct DenseSimplex {
    pub tolerances: Tolerances,
}

impl LpSolver for DenseSimplex {
    fn solve(&self, model: &LpModel) -> Result<LpSolution, LpError> {
        model.validate()?;
        let (mut tableau, maps) = Tableau::build(model);
        let tol = self.tolerances;
        let max_iter = tol
            .max_iterations
            .unwrap_or(50 * (tableau.rows + tableau.width) + 1000);

        if tableau.artificial_start < tableau.width {
            let mut cost = vec![0.0; tableau.width];
            for c in &mut cost[tableau.artificial_start..] {
                *c = 1.0;
            }
            tableau.price_out(&cost);
            tableau.run(&tol, 1.0, max_iter)?;
            let residual: f64 = (0..tableau.rows)
                .filter(|&i| tableau.basis[i] >= tableau.artificial_start)
                .map(|i| tableau.beta[i].max(0.0))
                .sum();
            if residual > tol.feasibility * tableau.rhs_scale {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    objective: f64::INFINITY,
                    primal: Vec::new(),
                    iterations: tableau.iterations,
                });
            }
            for u in &mut tableau.upper[tableau.artificial_start..] {
                *u = 0.0;
            }
        }

        let mut cost = vec![0.0; tableau.width];
        cost[..tableau.struct_cost.len()].copy_from_slice(&tableau.struct_cost);
        let scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        tableau.price_out(&cost);
        if tableau.run(&tol, scale, max_iter)? == Outcome::Unbounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                objective: f64::NEG_INFINITY,
                primal: Vec::new(),
                iterations: tableau.iterations,
            });
        }

        let internal = tableau.column_values();
        let primal: Vec<f64> = maps
            .iter()
            .zip(model.variables())
            .map(|(map, var)| {
                let x = match *map {
                    Mapping::Shift { col, lower } => lower + internal[col],
                    Mapping::Mirror { col, upper } => upper - internal[col],
                    Mapping::Split { pos, neg } => internal[pos] - internal[neg],
                };
                x.clamp(var.lower, var.upper)
            })
            .collect();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: model.objective_value(&primal),
            primal,
            iterations: tableau.iterations,
        })
    }
}

/// How a model variable is represented by nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum Mapping {
    /// `x = lower + col`
    Shift { col: usize, lower: f64 },
    /// `x = upper - col`, for variables without a lower bound
    Mirror { col: usize, upper: f64 },
    /// `x = pos - neg`, for free variables
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Unbounded,
}

const ZERO_STEP: f64 = 1e-12;
const DROP: f64 = 1e-13;

struct Tableau {
    rows: usize,
    width: usize,
    /// Row-major `rows × width` tableau `B⁻¹A`.
    a: Vec<f64>,
    /// Values of the basic columns.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    state: Vec<ColState>,
    /// Reduced costs of the current phase.
    d: Vec<f64>,
    struct_cost: Vec<f64>,
    artificial_start: usize,
    rhs_scale: f64,
    iterations: usize,
    scratch: Vec<(usize, f64)>,
}

impl Tableau {
    fn build(model: &LpModel) -> (Self, Vec<Mapping>) {
        let mut maps = Vec::with_capacity(model.num_vars());
        let mut upper = Vec::new();
        let mut struct_cost = Vec::new();
        for (var, &c) in model.variables().iter().zip(model.objective()) {
            if var.lower.is_finite() {
                maps.push(Mapping::Shift {
                    col: upper.len(),
                    lower: var.lower,
                });
                upper.push(var.upper - var.lower);
                struct_cost.push(c);
            } else if var.upper.is_finite() {
                maps.push(Mapping::Mirror {
                    col: upper.len(),
                    upper: var.upper,
                });
                upper.push(f64::INFINITY);
                struct_cost.push(-c);
            } else {
                let pos = upper.len();
                maps.push(Mapping::Split { pos, neg: pos + 1 });
                upper.extend([f64::INFINITY, f64::INFINITY]);
                struct_cost.extend([c, -c]);
            }
        }
        let n_struct = upper.len();
        let rows = model.num_constraints();

        // Rows over structural columns with shifted right-hand sides.
        let mut dense = vec![0.0; rows * n_struct];
        let mut rhs = vec![0.0; rows];
        for (i, con) in model.constraints().iter().enumerate() {
            let row = &mut dense[i * n_struct..(i + 1) * n_struct];
            let mut b = con.rhs;
            for &(v, a) in &con.coeffs {
                match maps[v.index()] {
                    Mapping::Shift { col, lower } => {
                        row[col] += a;
                        b -= a * lower;
                    }
                    Mapping::Mirror { col, upper } => {
                        row[col] -= a;
                        b -= a * upper;
                    }
                    Mapping::Split { pos, neg } => {
                        row[pos] += a;
                        row[neg] -= a;
                    }
                }
            }
            rhs[i] = b;
        }

        // Slack sign per row (+1 for <=, -1 for >=), then decide which rows need
        // an artificial column to start from a feasible basis.
        let slack_sign: Vec<Option<f64>> = model
            .constraints()
            .iter()
            .map(|c| match c.sense {
                Sense::Le => Some(1.0),
                Sense::Ge => Some(-1.0),
                Sense::Eq => None,
            })
            .collect();
        let n_slack = slack_sign.iter().filter(|s| s.is_some()).count();
        let needs_artificial: Vec<bool> = slack_sign
            .iter()
            .zip(&rhs)
            .map(|(s, &b)| match s {
                Some(sign) => sign * b < 0.0,
                None => true,
            })
            .collect();
        let n_art = needs_artificial.iter().filter(|&&x| x).count();
        let artificial_start = n_struct + n_slack;
        let width = artificial_start + n_art;

        let mut a = vec![0.0; rows * width];
        let mut beta = vec![0.0; rows];
        let mut basis = vec![0; rows];
        let mut state = vec![ColState::Lower; width];
        let mut next_slack = n_struct;
        let mut next_art = artificial_start;
        for i in 0..rows {
            let flip = match (slack_sign[i], needs_artificial[i]) {
                (Some(sign), false) => sign,
                _ => {
                    if rhs[i] < 0.0 {
                        -1.0
                    } else {
                        1.0
                    }
                }
            };
            let row = &mut a[i * width..(i + 1) * width];
            for (dst, &src) in row.iter_mut().zip(&dense[i * n_struct..(i + 1) * n_struct]) {
                *dst = flip * src;
            }
            beta[i] = flip * rhs[i];
            if let Some(sign) = slack_sign[i] {
                row[next_slack] = flip * sign;
                if !needs_artificial[i] {
                    basis[i] = next_slack;
                }
                next_slack += 1;
            }
            if needs_artificial[i] {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
            state[basis[i]] = ColState::Basic;
        }
        upper.resize(width, f64::INFINITY);
        let rhs_scale = rhs.iter().fold(1.0_f64, |m, b| m.max(b.abs()));

        (
            Self {
                rows,
                width,
                a,
                beta,
                basis,
                upper,
                state,
                d: vec![0.0; width],
                struct_cost,
                artificial_start,
                rhs_scale,
                iterations: 0,
                scratch: Vec::with_capacity(width),
            },
            maps,
        )
    }

    /// Sets reduced costs `d = c - c_B B⁻¹A` for a new phase objective.
    fn price_out(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.a[i * self.width..(i + 1) * self.width];
            for (d, &v) in self.d.iter_mut().zip(row) {
                *d -= cb * v;
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn entering(&self, bland: bool, threshold: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.width {
            let (score, dir) = match self.state[j] {
                ColState::Basic => continue,
                ColState::Lower if self.upper[j] > 0.0 && self.d[j] < -threshold => {
                    (-self.d[j], 1.0)
                }
                ColState::Upper if self.d[j] > threshold => (self.d[j], -1.0),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn run(&mut self, tol: &Tolerances, cost_scale: f64, max_iter: usize) -> Result<Outcome, LpError> {
        let threshold = tol.optimality * cost_scale;
        let w = self.width;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            let Some((j, dir)) = self.entering(bland, threshold) else {
                return Ok(Outcome::Optimal);
            };
            if self.iterations >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            self.iterations += 1;

            // Ratio test; the entering column's own bound is the first candidate.
            let mut step = self.upper[j];
            let mut leave: Option<(usize, ColState)> = None;
            let mut leave_alpha = 0.0;
            for i in 0..self.rows {
                let alpha = dir * self.a[i * w + j];
                let (ratio, bound) = if alpha > tol.pivot {
                    (self.beta[i].max(0.0) / alpha, ColState::Lower)
                } else if alpha < -tol.pivot {
                    let ub = self.upper[self.basis[i]];
                    if ub.is_infinite() {
                        continue;
                    }
                    ((ub - self.beta[i]).max(0.0) / -alpha, ColState::Upper)
                } else {
                    continue;
                };
                let take = if ratio < step - ZERO_STEP {
                    true
                } else if ratio <= step + ZERO_STEP {
                    match leave {
                        Some((r, _)) if bland => self.basis[i] < self.basis[r],
                        Some(_) => alpha.abs() > leave_alpha,
                        None => false,
                    }
                } else {
                    false
                };
                if take {
                    step = ratio;
                    leave = Some((i, bound));
                    leave_alpha = alpha.abs();
                }
            }
            if step.is_infinite() {
                return Ok(Outcome::Unbounded);
            }

            if step > ZERO_STEP {
                for i in 0..self.rows {
                    let v = self.a[i * w + j];
                    if v != 0.0 {
                        self.beta[i] -= dir * step * v;
                    }
                }
                degenerate = 0;
                bland = false;
            } else {
                degenerate += 1;
                if degenerate > tol.bland_after {
                    bland = true;
                }
            }

            match leave {
                None => {
                    self.state[j] = if dir > 0.0 {
                        ColState::Upper
                    } else {
                        ColState::Lower
                    };
                }
                Some((r, bound)) => {
                    let entering_value = if dir > 0.0 {
                        step
                    } else {
                        self.upper[j] - step
                    };
                    let leaving = self.basis[r];
                    self.state[leaving] = bound;
                    self.state[j] = ColState::Basic;
                    self.basis[r] = j;
                    self.beta[r] = entering_value;
                    self.pivot(r, j);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let inv = 1.0 / self.a[r * w + j];
        self.scratch.clear();
        for k in 0..w {
            let v = self.a[r * w + k];
            if v != 0.0 {
                let v = if k == j { 1.0 } else { v * inv };
                self.a[r * w + k] = v;
                self.scratch.push((k, v));
            }
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * w..(i + 1) * w];
            for &(k, v) in &self.scratch {
                let x = row[k] - f * v;
                row[k] = if x.abs() < DROP { 0.0 } else { x };
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for &(k, v) in &self.scratch {
                self.d[k] -= f * v;
            }
            self.d[j] = 0.0;
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .state
            .iter()
            .zip(&self.upper)
            .map(|(s, &u)| if *s == ColState::Upper { u } else { 0.0 })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            values[b] = self.beta[i].max(0.0);
        }
        values
    }
}
