//! Smooth constrained minimization over the capped budget simplex.
//!
//! Iterates stay on `{0 ≤ x ≤ u, Σx = B}` by exact projection. Remaining
//! inequalities (linear rows of the [`ConstraintSet`] and any smooth
//! constraints a [`Problem`] reports) are handled by a PHR augmented
//! Lagrangian; each subproblem is solved by spectral projected gradient
//! with monotone Armijo backtracking. Problems that carry the CVaR
//! auxiliary scalar pick it optimally inside [`Problem::evaluate`], so the
//! solver only moves `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, Portfolio};

mod constraints;
mod engine;
mod projection;

pub use constraints::{CapexLimit, CapexRule, ConstraintConfig, ConstraintSet, GroupCap, LinearConstraint};
pub use engine::{default_starts, minimize, minimize_from};
pub use projection::project_capped_simplex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("infeasible constraint set: {0}")]
    Infeasible(String),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("start point has {got} entries, problem has {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Projected-gradient iterations per augmented-Lagrangian subproblem.
    pub max_iterations: usize,
    pub max_outer: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking contraction factor.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Relative tolerance on `Σx = B` for a reported solution.
    pub projection_tol: f64,
    /// Tolerance on normalized constraint residuals.
    pub constraint_tol: f64,
    /// Tolerance on the projected-gradient norm in share space.
    pub pg_tol: f64,
    /// Projected-gradient norm accepted when the merit stagnates at
    /// floating-point precision.
    pub stall_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub multistart: usize,
    pub seed: u64,
    /// Multipliers of the base smoothing scale, one subsolve per entry,
    /// warm-started. `[1.0]` is a fixed scale.
    pub smoothing_schedule: Vec<f64>,
    pub time_budget_ms: Option<u64>,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3000,
            max_outer: 40,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            projection_tol: 1e-10,
            constraint_tol: 1e-6,
            pg_tol: 1e-9,
            stall_tol: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e10,
            multistart: 8,
            seed: 7,
            smoothing_schedule: vec![100.0, 10.0, 1.0],
            time_budget_ms: None,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn single_start(&self) -> Self {
        Self { multistart: 1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidConfig(what.to_string()));
        if self.max_iterations == 0 || self.max_outer == 0 || self.max_backtracks == 0 {
            return bad("iteration limits must be positive");
        }
        if self.multistart == 0 {
            return bad("multistart must be at least 1");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("armijo and backtrack must lie in (0, 1)");
        }
        let positive = [
            self.projection_tol,
            self.constraint_tol,
            self.pg_tol,
            self.stall_tol,
            self.penalty_init,
            self.penalty_max,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.penalty_growth > 1.0) {
            return bad("tolerances and penalties must be positive, growth above 1");
        }
        if self.smoothing_schedule.is_empty() || self.smoothing_schedule.iter().any(|v| !(*v > 0.0)) {
            return bad("smoothing schedule must be a non-empty list of positive factors");
        }
        Ok(())
    }
}

/// A smooth inequality `value ≤ 0` with its gradient in `x`.
#[derive(Debug, Clone, Default)]
pub struct ConstraintValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Partial derivative in the auxiliary scalar, when the problem has one.
    pub d_alpha: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Auxiliary scalar used for this evaluation.
    pub alpha: Option<f64>,
    pub d_alpha: f64,
    pub constraints: Vec<ConstraintValue>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub gradient: bool,
    /// Multiplier on the problem's base smoothing scale.
    pub smoothing: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { gradient: true, smoothing: 1.0 }
    }
}

/// A minimization problem over the capped simplex of its constraint set.
pub trait Problem: Sync {
    fn constraints(&self) -> &ConstraintSet;

    /// Objective and smooth constraints at `x`. With `alpha: None` the
    /// problem picks its auxiliary scalar (if any) optimally; with
    /// `Some(a)` it evaluates the joint function at `a`.
    fn evaluate(&self, x: &[f64], alpha: Option<f64>, opts: EvalOptions) -> Evaluation;

    fn dim(&self) -> usize {
        self.constraints().dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub start: usize,
    pub stage: usize,
    pub outer: usize,
    pub iteration: usize,
    pub merit: f64,
    /// Projected-gradient norm before the step.
    pub pg_norm: f64,
    pub max_violation: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub budget: f64,
    pub alpha: Option<f64>,
    /// Objective at the final smoothing scale.
    pub objective: f64,
    /// Normalized constraint values (linear rows first), `≤ 0` when satisfied.
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

impl Solution {
    pub fn portfolio(&self) -> Portfolio {
        Portfolio::new(self.x.clone(), self.budget).expect("solver output lies on the budget simplex")
    }

    /// Trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect()
    }
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over every coordinate of `x` and, when
/// `alpha` is given, the auxiliary scalar.
pub fn check_gradient(problem: &dyn Problem, x: &[f64], alpha: Option<f64>, h: f64) -> f64 {
    let opts = EvalOptions { gradient: true, smoothing: 1.0 };
    let value_only = EvalOptions { gradient: false, ..opts };
    let base = problem.evaluate(x, alpha, opts);
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / (analytic.abs() + 1e-12);
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = problem.evaluate(&probe, alpha, value_only).value;
        probe[i] = x[i] - h;
        let down = problem.evaluate(&probe, alpha, value_only).value;
        probe[i] = x[i];
        worst = worst.max(rel(base.gradient[i], (up - down) / (2.0 * h)));
    }
    if let Some(a) = alpha {
        let up = problem.evaluate(x, Some(a + h), value_only).value;
        let down = problem.evaluate(x, Some(a - h), value_only).value;
        worst = worst.max(rel(base.d_alpha, (up - down) / (2.0 * h)));
    }
    worst
}
