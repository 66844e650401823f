use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_hhi_constrained, ActiveReport, ConstrainedDivRequest, StrategyError};
use crate::metrics::{MetricTriple, RiskSpec};
use crate::scenario::ScenarioSet;
use crate::solver::{ConstraintSet, SolverConfig};

/// Sampling zone inside the tolerance rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    /// Both metrics may degrade.
    S1,
    /// Profit must improve, risk may degrade.
    S2,
    /// Risk must improve, profit may degrade.
    S3,
}

impl Zone {
    pub const ALL: [Zone; 3] = [Zone::S1, Zone::S2, Zone::S3];

    pub fn name(self) -> &'static str {
        match self {
            Zone::S1 => "s1",
            Zone::S2 => "s2",
            Zone::S3 => "s3",
        }
    }
}

impl std::fmt::Display for Zone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A `2a × 2b` rectangle of fractional tolerances around a baseline point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceRectangle {
    /// Half-width on the profit axis.
    pub a: f64,
    /// Half-width on the risk axis.
    pub b: f64,
    /// Pair counts for zones s1, s2, s3.
    pub counts: [usize; 3],
    pub seed: u64,
}

impl Default for ToleranceRectangle {
    fn default() -> Self {
        Self { a: 0.1, b: 0.1, counts: [4, 2, 2], seed: 42 }
    }
}

impl ToleranceRectangle {
    pub fn validate(&self) -> Result<(), StrategyError> {
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(StrategyError::InvalidRequest(format!("rectangle {name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePair {
    pub zone: Zone,
    /// Position within its zone.
    pub index: usize,
    pub dp: f64,
    pub dr: f64,
}

/// Deterministic pairs, zone by zone. Magnitudes are `a·(1 - U)` with
/// `U ~ [0, 1)`, so they lie in `(0, a]`; the sign encodes the zone.
pub fn generate_tolerance_pairs(rect: &ToleranceRectangle) -> Result<Vec<TolerancePair>, StrategyError> {
    rect.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rect.seed);
    let mut draw = |half: f64| half * (1.0 - rng.random::<f64>());
    let mut pairs = Vec::with_capacity(rect.total());
    for (zone, &count) in Zone::ALL.iter().zip(&rect.counts) {
        for index in 0..count {
            let p = draw(rect.a);
            let r = draw(rect.b);
            let (dp, dr) = match zone {
                Zone::S1 => (p, r),
                Zone::S2 => (-p, r),
                Zone::S3 => (p, -r),
            };
            pairs.push(TolerancePair { zone: *zone, index, dp, dr });
        }
    }
    Ok(pairs)
}

/// A solved baseline the suite perturbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub w: f64,
    pub x: Vec<f64>,
    pub metrics: MetricTriple,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub w: f64,
    pub zone: Zone,
    pub index: usize,
    pub dp: f64,
    pub dr: f64,
    pub feasible: bool,
    pub converged: bool,
    pub from_baseline: bool,
    pub x: Vec<f64>,
    pub roi: f64,
    pub risk: f64,
    pub hhi: f64,
    pub theta2: f64,
    /// Solver residuals, linear rows first, then the ROI and risk rows.
    pub residuals: Vec<f64>,
    pub report: ActiveReport,
}

/// A run that errored before producing a portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub w: f64,
    pub zone: Zone,
    pub index: usize,
    pub dp: f64,
    pub dr: f64,
    pub error: String,
}

/// Everything needed to reproduce a suite, plus its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteArtifact {
    pub rectangle: ToleranceRectangle,
    pub w_r: f64,
    pub risk: RiskSpec,
    pub solver: SolverConfig,
    pub pairs: Vec<TolerancePair>,
    pub baselines: Vec<Baseline>,
    pub runs: Vec<SuiteRun>,
    pub failures: Vec<SuiteFailure>,
}

impl SuiteArtifact {
    pub fn feasible_runs(&self) -> impl Iterator<Item = &SuiteRun> {
        self.runs.iter().filter(|r| r.feasible)
    }
}

/// One constrained solve per (baseline, pair), in parallel. Errored runs
/// are collected in `failures`; both lists are ordered by `(w, zone, index)`.
#[allow(clippy::too_many_arguments)]
pub fn run_perturbation_suite(
    baselines: &[Baseline],
    rect: &ToleranceRectangle,
    w_r: f64,
    risk: RiskSpec,
    constraints: &ConstraintSet,
    solver: &SolverConfig,
    set: &ScenarioSet,
) -> Result<SuiteArtifact, StrategyError> {
    let pairs = generate_tolerance_pairs(rect)?;
    let tasks: Vec<(&Baseline, &TolerancePair)> =
        baselines.iter().flat_map(|b| pairs.iter().map(move |p| (b, p))).collect();
    let outcomes: Vec<Result<SuiteRun, SuiteFailure>> = tasks
        .par_iter()
        .map(|(b, pair)| {
            let request = ConstrainedDivRequest {
                w_r,
                risk,
                solver: solver.clone(),
                ..ConstrainedDivRequest::new(b.x.clone(), b.metrics, pair.dp, pair.dr, constraints.clone())
            };
            match solve_hhi_constrained(&request, set) {
                Ok(r) => Ok(SuiteRun {
                    w: b.w,
                    zone: pair.zone,
                    index: pair.index,
                    dp: pair.dp,
                    dr: pair.dr,
                    feasible: r.feasible,
                    converged: r.solution.converged,
                    from_baseline: r.from_baseline,
                    roi: r.metrics.roi,
                    risk: r.metrics.risk,
                    hhi: r.metrics.hhi,
                    theta2: r.theta2,
                    residuals: r.solution.residuals,
                    report: r.report,
                    x: r.solution.x,
                }),
                Err(e) => Err(SuiteFailure {
                    w: b.w,
                    zone: pair.zone,
                    index: pair.index,
                    dp: pair.dp,
                    dr: pair.dr,
                    error: e.to_string(),
                }),
            }
        })
        .collect();
    let (mut runs, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    runs.sort_by(|p, q| p.w.total_cmp(&q.w).then(p.zone.cmp(&q.zone)).then(p.index.cmp(&q.index)));
    failures.sort_by(|p, q| p.w.total_cmp(&q.w).then(p.zone.cmp(&q.zone)).then(p.index.cmp(&q.index)));
    Ok(SuiteArtifact {
        rectangle: rect.clone(),
        w_r,
        risk,
        solver: solver.clone(),
        pairs,
        baselines: baselines.to_vec(),
        runs,
        failures,
    })
}
