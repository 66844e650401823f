//! The mean-risk baseline, the HHI-penalty and the HHI-constrained
//! diversification strategies, and the tolerance-pair suite.
//!
//! Every reported [`MetricTriple`] is recomputed from the returned `x` with
//! the exact evaluators; smoothing only lives inside the solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier;
use crate::metrics::{self, FrontStats, MetricTriple, MetricsError, RiskSpec};
use crate::scenario::ScenarioSet;
use crate::solver::{self, ConstraintSet, EvalOptions, Problem, Solution, SolverConfig, SolverError};

mod problems;
mod tolerance;

pub use problems::{ConstrainedProblem, MeanRiskProblem, ToleranceBounds};
pub use tolerance::{
    generate_tolerance_pairs, run_perturbation_suite, Baseline, SuiteArtifact, SuiteFailure, SuiteRun, TolerancePair,
    ToleranceRectangle, Zone,
};

/// Risk weights of the default study grid.
pub const DEFAULT_W_GRID: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];
/// Diversification weights of the default penalty sweep.
pub const DEFAULT_WD_GRID: [f64; 4] = [0.0, 0.2, 0.5, 0.9];
/// Default weight of the auxiliary tail term in the constrained strategy.
pub const DEFAULT_W_R: f64 = 0.001;
/// Absolute tolerance of the exact feasibility re-check.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Relative slack under which a tolerance constraint counts as active.
pub const ACTIVE_SLACK: f64 = 0.01;
/// Below this baseline risk the risk bound becomes additive.
pub const ADDITIVE_RISK_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn check_unit(name: &str, v: f64) -> Result<(), StrategyError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(StrategyError::InvalidRequest(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRequest {
    /// Risk-aversion weight.
    pub w: f64,
    pub risk: RiskSpec,
    pub constraints: ConstraintSet,
    pub solver: SolverConfig,
}

impl BaselineRequest {
    pub fn new(w: f64, constraints: ConstraintSet) -> Self {
        Self { w, risk: RiskSpec::default(), constraints, solver: SolverConfig::default() }
    }

    pub fn with_w(&self, w: f64) -> Self {
        Self { w, ..self.clone() }
    }

    fn validate(&self, set: &ScenarioSet) -> Result<(), StrategyError> {
        check_unit("w", self.w)?;
        self.risk.validate()?;
        self.solver.validate()?;
        if self.constraints.dim() != set.n() {
            return Err(StrategyError::InvalidRequest(format!(
                "constraints cover {} assets, dataset has {}",
                self.constraints.dim(),
                set.n()
            )));
        }
        self.constraints.validate()?;
        Ok(())
    }
}

/// Where the penalty scale comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta1 {
    Fixed(f64),
    /// Means over a precomputed baseline front.
    Stats(FrontStats),
    /// Solve the baseline front over this `w` grid first.
    Auto(Vec<f64>),
}

impl Theta1 {
    pub fn resolve(&self, set: &ScenarioSet, base: &BaselineRequest) -> Result<f64, StrategyError> {
        let value = match self {
            Theta1::Fixed(v) => *v,
            Theta1::Stats(stats) => metrics::theta1(stats, base.w)?,
            Theta1::Auto(grid) => metrics::theta1(&frontier::baseline_stats(set, base, grid)?, base.w)?,
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(StrategyError::InvalidRequest(format!("theta1 must be positive, got {value}")));
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRequest {
    pub base: BaselineRequest,
    pub w_d: f64,
    pub theta1: Theta1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub solution: Solution,
    pub metrics: MetricTriple,
    /// Objective (minimization form) on exact metrics.
    pub objective: f64,
}

pub fn solve_baseline(request: &BaselineRequest, set: &ScenarioSet) -> Result<StrategyResult, StrategyError> {
    solve_mean_risk(request, 0.0, set)
}

pub fn solve_hhi_penalty(request: &PenaltyRequest, set: &ScenarioSet) -> Result<StrategyResult, StrategyError> {
    request.base.validate(set)?;
    check_unit("w_d", request.w_d)?;
    let theta1 = request.theta1.resolve(set, &request.base)?;
    solve_mean_risk(&request.base, request.w_d * theta1, set)
}

fn solve_mean_risk(request: &BaselineRequest, hhi_weight: f64, set: &ScenarioSet) -> Result<StrategyResult, StrategyError> {
    request.validate(set)?;
    let problem = MeanRiskProblem::new(set, request.constraints.clone(), request.w, hhi_weight, request.risk)?;
    let x0 = vec![request.constraints.budget / set.n() as f64; set.n()];
    let solution = solver::minimize(&problem, &x0, &request.solver)?;
    let metrics = metrics::evaluate(&solution.x, solution.budget, set, &request.risk)?;
    let objective = problem.exact_objective(metrics.roi, metrics.risk, metrics.hhi);
    Ok(StrategyResult { solution, metrics, objective })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedDivRequest {
    pub baseline_x: Vec<f64>,
    pub baseline: MetricTriple,
    /// Fractional ROI degradation; negative demands improvement.
    pub dp: f64,
    /// Fractional risk degradation; negative demands improvement.
    pub dr: f64,
    pub w_r: f64,
    /// Defaults to `HHI* / (ROI* - Risk*)`.
    pub theta2: Option<f64>,
    pub risk: RiskSpec,
    pub constraints: ConstraintSet,
    pub solver: SolverConfig,
}

impl ConstrainedDivRequest {
    pub fn new(baseline_x: Vec<f64>, baseline: MetricTriple, dp: f64, dr: f64, constraints: ConstraintSet) -> Self {
        Self {
            baseline_x,
            baseline,
            dp,
            dr,
            w_r: DEFAULT_W_R,
            theta2: None,
            risk: RiskSpec::default(),
            constraints,
            solver: SolverConfig::default(),
        }
    }

    /// ROI floor and risk ceiling implied by the tolerance pair.
    pub fn bounds(&self) -> (ToleranceBounds, RiskRule) {
        let b = &self.baseline;
        let roi_min = b.roi * (1.0 - self.dp);
        if b.risk < ADDITIVE_RISK_THRESHOLD {
            (ToleranceBounds { roi_min, risk_max: b.risk + self.dr * b.roi.abs() }, RiskRule::Additive)
        } else {
            (ToleranceBounds { roi_min, risk_max: b.risk * (1.0 + self.dr) }, RiskRule::Multiplicative)
        }
    }

    fn validate(&self, set: &ScenarioSet) -> Result<(), StrategyError> {
        for (name, v) in [("dp", self.dp), ("dr", self.dr)] {
            if !(v > -1.0 && v < 1.0) {
                return Err(StrategyError::InvalidRequest(format!("{name} must lie in (-1, 1), got {v}")));
            }
        }
        if !(self.w_r > 0.0 && self.w_r.is_finite()) {
            return Err(StrategyError::InvalidRequest(format!("w_r must be positive, got {}", self.w_r)));
        }
        if self.baseline_x.len() != set.n() || self.constraints.dim() != set.n() {
            return Err(StrategyError::InvalidRequest("baseline or constraints do not match the dataset".into()));
        }
        self.risk.validate()?;
        self.solver.validate()?;
        self.constraints.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskRule {
    /// `Risk ≤ Risk*·(1 + Δr)`.
    Multiplicative,
    /// `Risk ≤ Risk* + Δr·|ROI*|`, used when `Risk*` is numerically zero.
    Additive,
}

/// Exact slack of both tolerance constraints at the returned portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveReport {
    pub roi_bound: f64,
    pub risk_bound: f64,
    pub risk_rule: RiskRule,
    /// `(ROI - roi_bound) / |roi_bound|`.
    pub roi_slack: f64,
    /// `(risk_bound - Risk) / |risk_bound|`.
    pub risk_slack: f64,
    pub roi_active: bool,
    pub risk_active: bool,
    /// Smoothed risk at the returned `α`, an upper bound on the exact risk.
    pub surrogate_risk: f64,
}

impl ActiveReport {
    pub fn any_active(&self) -> bool {
        self.roi_active || self.risk_active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedResult {
    pub solution: Solution,
    pub metrics: MetricTriple,
    pub objective: f64,
    pub theta2: f64,
    /// Exact re-verification of every constraint within [`FEASIBILITY_TOL`].
    pub feasible: bool,
    /// The baseline itself was returned because the solver found nothing
    /// better that passes the exact check.
    pub from_baseline: bool,
    pub report: ActiveReport,
}

/// The baseline already sits near the tolerance region, so coarse
/// continuation stages only add surrogate bias to the risk row.
fn final_scale_only(solver: &SolverConfig) -> SolverConfig {
    let last = solver.smoothing_schedule.last().copied().unwrap_or(1.0);
    SolverConfig { smoothing_schedule: vec![last], ..solver.single_start() }
}

pub fn solve_hhi_constrained(
    request: &ConstrainedDivRequest,
    set: &ScenarioSet,
) -> Result<ConstrainedResult, StrategyError> {
    request.validate(set)?;
    let theta2 = match request.theta2 {
        Some(t) => t,
        None => metrics::theta2(&request.baseline)?,
    };
    let (bounds, risk_rule) = request.bounds();
    let problem =
        ConstrainedProblem::new(set, request.constraints.clone(), request.risk, request.w_r * theta2, bounds)?;
    let mut solution =
        solver::minimize_from(&problem, &[request.baseline_x.clone()], &final_scale_only(&request.solver))?;
    let mut assessed = assess(&problem, request, bounds, set, &solution.x)?;
    let mut from_baseline = false;
    // The baseline is always a candidate: it is exactly feasible whenever
    // both tolerances are non-negative.
    let incumbent = assess(&problem, request, bounds, set, &request.baseline_x)?;
    if incumbent.feasible && (!assessed.feasible || incumbent.objective < assessed.objective) {
        let ev = problem.evaluate(&request.baseline_x, None, EvalOptions { gradient: false, smoothing: 1.0 });
        solution.residuals = request
            .constraints
            .linear_rows()
            .iter()
            .map(|r| r.value(&request.baseline_x))
            .chain(ev.constraints.iter().map(|c| c.value))
            .collect();
        solution.max_violation = solution.residuals.iter().fold(0.0_f64, |m, &v| m.max(v));
        solution.objective = ev.value;
        solution.alpha = ev.alpha;
        solution.x = request.baseline_x.clone();
        assessed = incumbent;
        from_baseline = true;
    }
    let Assessment { metrics, objective, feasible, .. } = assessed;
    let roi_slack = relative_slack(metrics.roi - bounds.roi_min, bounds.roi_min);
    let risk_slack = relative_slack(bounds.risk_max - metrics.risk, bounds.risk_max);
    let report = ActiveReport {
        roi_bound: bounds.roi_min,
        risk_bound: bounds.risk_max,
        risk_rule,
        roi_slack,
        risk_slack,
        roi_active: roi_slack.abs() <= ACTIVE_SLACK,
        risk_active: risk_slack.abs() <= ACTIVE_SLACK,
        surrogate_risk: problem.surrogate_risk(&solution.x, solution.alpha.unwrap_or(0.0)),
    };
    Ok(ConstrainedResult { solution, metrics, objective, theta2, feasible, from_baseline, report })
}

fn relative_slack(slack: f64, bound: f64) -> f64 {
    if bound.abs() > 0.0 {
        slack / bound.abs()
    } else {
        slack
    }
}

struct Assessment {
    metrics: MetricTriple,
    objective: f64,
    feasible: bool,
}

fn assess(
    problem: &ConstrainedProblem,
    request: &ConstrainedDivRequest,
    bounds: ToleranceBounds,
    set: &ScenarioSet,
    x: &[f64],
) -> Result<Assessment, StrategyError> {
    let metrics = metrics::evaluate(x, request.constraints.budget, set, &request.risk)?;
    let linear_ok = request
        .constraints
        .linear_rows()
        .iter()
        .all(|r| r.value(x) * r.scale <= FEASIBILITY_TOL * r.scale.max(1.0));
    let feasible = metrics.roi >= bounds.roi_min - FEASIBILITY_TOL
        && metrics.risk <= bounds.risk_max + FEASIBILITY_TOL
        && linear_ok;
    Ok(Assessment { objective: problem.exact_objective(metrics.roi, metrics.risk, metrics.hhi), metrics, feasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, GeneratorSpec};

    fn desk() -> ScenarioSet {
        generate_synthetic(&GeneratorSpec::default()).unwrap()
    }

    #[test]
    fn zero_weight_concentrates_on_best_asset() {
        let set = desk();
        let (bound, j) = metrics::roi_upper_bound(&set);
        let r = solve_baseline(&BaselineRequest::new(0.0, ConstraintSet::unconstrained(set.n(), 100.0)), &set).unwrap();
        assert!(r.solution.converged);
        assert!(r.solution.x[j] >= 99.9);
        assert!((r.metrics.roi - bound).abs() <= 1e-6);
    }

    #[test]
    fn zero_penalty_reproduces_baseline_bits() {
        let set = desk();
        let base = BaselineRequest::new(0.6, ConstraintSet::unconstrained(set.n(), 100.0));
        let a = solve_baseline(&base, &set).unwrap();
        let b = solve_hhi_penalty(&PenaltyRequest { base, w_d: 0.0, theta1: Theta1::Fixed(3.0) }, &set).unwrap();
        assert_eq!(a.solution.x, b.solution.x);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn duplicated_best_asset_splits_evenly() {
        let set = desk();
        let (_, j) = metrics::roi_upper_bound(&set);
        let returns: Vec<Vec<f64>> = set.returns_matrix().into_iter().map(|r| vec![r[j], r[j], r[(j + 1) % 6]]).collect();
        let invest: Vec<Vec<f64>> =
            set.investments_matrix().into_iter().map(|r| vec![r[j], r[j], r[(j + 1) % 6]]).collect();
        let mut assets = vec![set.assets()[j].clone(), set.assets()[j].clone(), set.assets()[(j + 1) % 6].clone()];
        assets[1].country += 10;
        for (k, a) in assets.iter_mut().enumerate() {
            a.id = k;
        }
        let dup = ScenarioSet::new(assets, returns, invest).unwrap();
        let r = solve_baseline(&BaselineRequest::new(0.0, ConstraintSet::unconstrained(3, 1.0)), &dup).unwrap();
        assert!((r.solution.x[0] - 0.5).abs() < 1e-6 && (r.solution.x[1] - 0.5).abs() < 1e-6, "{:?}", r.solution.x);
    }

    #[test]
    fn request_validation() {
        let set = desk();
        let cs = ConstraintSet::unconstrained(set.n(), 1.0);
        assert!(matches!(solve_baseline(&BaselineRequest::new(1.5, cs.clone()), &set), Err(StrategyError::InvalidRequest(_))));
        let pen = PenaltyRequest { base: BaselineRequest::new(0.5, cs.clone()), w_d: -0.1, theta1: Theta1::Fixed(1.0) };
        assert!(matches!(solve_hhi_penalty(&pen, &set), Err(StrategyError::InvalidRequest(_))));
        let t = MetricTriple { roi: 1.3, risk: 0.1, hhi: 1.0 };
        let bad = ConstrainedDivRequest::new(vec![1.0 / 6.0; 6], t, 1.0, 0.0, cs);
        assert!(matches!(solve_hhi_constrained(&bad, &set), Err(StrategyError::InvalidRequest(_))));
    }

    #[test]
    fn risk_bound_rules() {
        let cs = ConstraintSet::unconstrained(2, 1.0);
        let r = ConstrainedDivRequest::new(vec![0.5; 2], MetricTriple { roi: 1.2, risk: 0.2, hhi: 0.5 }, 0.1, 0.1, cs.clone());
        let (b, rule) = r.bounds();
        assert_eq!(rule, RiskRule::Multiplicative);
        assert!((b.roi_min - 1.08).abs() < 1e-12 && (b.risk_max - 0.22).abs() < 1e-12);
        let z = ConstrainedDivRequest::new(vec![0.5; 2], MetricTriple { roi: 1.2, risk: 0.0, hhi: 0.5 }, 0.1, 0.1, cs);
        let (b, rule) = z.bounds();
        assert_eq!(rule, RiskRule::Additive);
        assert!((b.risk_max - 0.12).abs() < 1e-12);
    }
}
