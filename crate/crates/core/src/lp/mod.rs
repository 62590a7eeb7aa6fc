//! Linear programming layer.
//!
//! Models are built with [`LpModel`] and solved by any [`LpSolver`]. The
//! bundled backend is [`DenseSimplex`], a bounded-variable two-phase primal
//! simplex on a dense tableau.

mod format;
mod model;
mod simplex;

pub use format::write_lp_format;
pub use model::{Constraint, LinExpr, LpModel, Sense, VarId, Variable};
pub use simplex::{DenseSimplex, Tolerances};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at the optimum; `+inf` when infeasible, `-inf` when unbounded.
    pub objective: f64,
    /// One value per variable when optimal, empty otherwise.
    pub primal: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.primal[var.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("constraint {constraint} references variable {index} but the model has {num_vars}")]
    IndexOutOfRange {
        constraint: usize,
        index: usize,
        num_vars: usize,
    },
    #[error("variable {var} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),
}

pub trait LpSolver: Send + Sync {
    fn solve(&self, model: &LpModel) -> Result<LpSolution, LpError>;
}

/// Solves with the default [`DenseSimplex`] backend.
pub fn solve(model: &LpModel) -> Result<LpSolution, LpError> {
    DenseSimplex::default().solve(model)
}
