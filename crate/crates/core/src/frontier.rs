//! Risk-weight sweeps, Pareto filtering and `[0, 1]` plot normalization.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{FrontStats, MetricTriple};
use crate::scenario::ScenarioSet;
use crate::strategies::{
    solve_baseline, solve_hhi_penalty, BaselineRequest, ConstrainedResult, PenaltyRequest, StrategyError,
    StrategyResult, SuiteRun, Theta1, Zone,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyTag {
    Baseline,
    Penalty { w_d: f64 },
    Constrained { dp: f64, dr: f64, zone: Option<Zone> },
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyTag::Baseline => write!(f, "baseline"),
            StrategyTag::Penalty { w_d } => write!(f, "penalty(w_d={w_d})"),
            StrategyTag::Constrained { dp, dr, zone: Some(z) } => write!(f, "constrained({z},dp={dp},dr={dr})"),
            StrategyTag::Constrained { dp, dr, zone: None } => write!(f, "constrained(dp={dp},dr={dr})"),
        }
    }
}

/// One solved portfolio with exactly recomputed metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub w: f64,
    pub x: Vec<f64>,
    pub budget: f64,
    pub roi: f64,
    pub risk: f64,
    pub hhi: f64,
    pub strategy: StrategyTag,
    pub feasible: bool,
    pub converged: bool,
}

impl FrontierPoint {
    pub fn from_result(w: f64, strategy: StrategyTag, r: &StrategyResult) -> Self {
        Self {
            w,
            x: r.solution.x.clone(),
            budget: r.solution.budget,
            roi: r.metrics.roi,
            risk: r.metrics.risk,
            hhi: r.metrics.hhi,
            strategy,
            feasible: true,
            converged: r.solution.converged,
        }
    }

    pub fn from_constrained(w: f64, dp: f64, dr: f64, zone: Option<Zone>, r: &ConstrainedResult) -> Self {
        Self {
            w,
            x: r.solution.x.clone(),
            budget: r.solution.budget,
            roi: r.metrics.roi,
            risk: r.metrics.risk,
            hhi: r.metrics.hhi,
            strategy: StrategyTag::Constrained { dp, dr, zone },
            feasible: r.feasible,
            converged: r.solution.converged,
        }
    }

    pub fn from_suite_run(run: &SuiteRun, budget: f64) -> Self {
        Self {
            w: run.w,
            x: run.x.clone(),
            budget,
            roi: run.roi,
            risk: run.risk,
            hhi: run.hhi,
            strategy: StrategyTag::Constrained { dp: run.dp, dr: run.dr, zone: Some(run.zone) },
            feasible: run.feasible,
            converged: run.converged,
        }
    }

    pub fn metrics(&self) -> MetricTriple {
        MetricTriple { roi: self.roi, risk: self.risk, hhi: self.hhi }
    }

    pub fn shares(&self) -> Vec<f64> {
        self.x.iter().map(|v| v / self.budget).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub w: f64,
    pub error: String,
}

/// Per-axis affine map onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub roi_min: f64,
    pub roi_max: f64,
    pub risk_min: f64,
    pub risk_max: f64,
}

impl NormalizationBounds {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a FrontierPoint>) -> Option<Self> {
        let mut it = points.into_iter().peekable();
        it.peek()?;
        let inf = f64::INFINITY;
        let b = it.fold(
            Self { roi_min: inf, roi_max: -inf, risk_min: inf, risk_max: -inf },
            |b, p| Self {
                roi_min: b.roi_min.min(p.roi),
                roi_max: b.roi_max.max(p.roi),
                risk_min: b.risk_min.min(p.risk),
                risk_max: b.risk_max.max(p.risk),
            },
        );
        Some(b)
    }

    fn axis(v: f64, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    /// Normalized `(roi, risk)`; a degenerate axis maps to `0.5`.
    pub fn map(&self, roi: f64, risk: f64) -> (f64, f64) {
        (Self::axis(roi, self.roi_min, self.roi_max), Self::axis(risk, self.risk_min, self.risk_max))
    }
}

/// Bounds over the union of every displayed point set.
pub fn normalize(sets: &[&[FrontierPoint]]) -> Option<NormalizationBounds> {
    NormalizationBounds::from_points(sets.iter().flat_map(|s| s.iter()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub points: Vec<FrontierPoint>,
    pub failures: Vec<SweepFailure>,
    pub bounds: Option<NormalizationBounds>,
}

impl Frontier {
    pub fn new(points: Vec<FrontierPoint>) -> Self {
        let bounds = normalize(&[&points]);
        Self { points, failures: Vec::new(), bounds }
    }

    /// Widens the bounds to also cover `extra`.
    pub fn include(&mut self, extra: &[FrontierPoint]) {
        self.bounds = normalize(&[&self.points, extra]);
    }

    pub fn normalized(&self, p: &FrontierPoint) -> (f64, f64) {
        self.bounds.map_or((0.5, 0.5), |b| b.map(p.roi, p.risk))
    }

    pub fn pareto(&self) -> Vec<FrontierPoint> {
        pareto_filter(&self.points)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("frontier is serializable") + "\n"
    }

    /// CSV with one row per point; share columns are named by `labels`.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> =
            ["w", "roi", "risk", "hhi", "roi_norm", "risk_norm", "strategy", "feasible", "converged"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        header.extend(labels.iter().map(|l| format!("x_{l}")));
        w.write_record(&header).expect("in-memory write");
        for p in &self.points {
            let (u, v) = self.normalized(p);
            let mut row = vec![
                p.w.to_string(),
                p.roi.to_string(),
                p.risk.to_string(),
                p.hhi.to_string(),
                u.to_string(),
                v.to_string(),
                p.strategy.to_string(),
                p.feasible.to_string(),
                p.converged.to_string(),
            ];
            row.extend(p.x.iter().map(|x| x.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Indices of the points no other point dominates (higher-or-equal ROI and
/// lower-or-equal risk, one strictly), in input order.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (ri, ki) = points[i];
            !points.iter().any(|&(r, k)| r >= ri && k <= ki && (r > ri || k < ki))
        })
        .collect()
}

pub fn pareto_filter(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.roi, p.risk)).collect();
    pareto_indices(&coords).into_iter().map(|i| points[i].clone()).collect()
}

/// What each sweep point solves; `w` is overridden per point.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepTemplate {
    Baseline(BaselineRequest),
    Penalty(PenaltyRequest),
}

/// One point per `w`, ordered by `w` descending. Solver failures are
/// recorded and the sweep continues.
pub fn sweep_w(w_list: &[f64], template: &SweepTemplate, set: &ScenarioSet) -> Result<Frontier, StrategyError> {
    if w_list.is_empty() {
        return Err(StrategyError::InvalidRequest("empty w list".into()));
    }
    if let Some(w) = w_list.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(StrategyError::InvalidRequest(format!("w must lie in [0, 1], got {w}")));
    }
    let template = match template {
        SweepTemplate::Penalty(p) => match &p.theta1 {
            Theta1::Auto(grid) => SweepTemplate::Penalty(PenaltyRequest {
                theta1: Theta1::Stats(baseline_stats(set, &p.base, grid)?),
                ..p.clone()
            }),
            _ => SweepTemplate::Penalty(p.clone()),
        },
        t => t.clone(),
    };
    let mut outcomes: Vec<(f64, Result<FrontierPoint, StrategyError>)> = w_list
        .par_iter()
        .map(|&w| {
            let point = match &template {
                SweepTemplate::Baseline(b) => {
                    solve_baseline(&b.with_w(w), set).map(|r| FrontierPoint::from_result(w, StrategyTag::Baseline, &r))
                }
                SweepTemplate::Penalty(p) => {
                    let req = PenaltyRequest { base: p.base.with_w(w), ..p.clone() };
                    solve_hhi_penalty(&req, set)
                        .map(|r| FrontierPoint::from_result(w, StrategyTag::Penalty { w_d: p.w_d }, &r))
                }
            };
            (w, point)
        })
        .collect();
    outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (w, o) in outcomes {
        match o {
            Ok(p) => points.push(p),
            Err(e) => failures.push(SweepFailure { w, error: e.to_string() }),
        }
    }
    let mut f = Frontier::new(points);
    f.failures = failures;
    Ok(f)
}

/// Mean absolute metrics over the non-dominated baseline points of a sweep.
pub fn baseline_stats(set: &ScenarioSet, base: &BaselineRequest, w_grid: &[f64]) -> Result<FrontStats, StrategyError> {
    let front = sweep_w(w_grid, &SweepTemplate::Baseline(base.clone()), set)?;
    let pareto = front.pareto();
    let triples: Vec<MetricTriple> = pareto.iter().map(|p| p.metrics()).collect();
    FrontStats::from_triples(&triples).ok_or_else(|| {
        let detail = front.failures.first().map(|f| f.error.clone()).unwrap_or_default();
        StrategyError::InvalidRequest(format!("baseline sweep produced no points {detail}"))
    })
}
