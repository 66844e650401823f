//! Exact evaluation of ROI, CVaR deviation, HHI and the scaling terms.
//!
//! Per scenario `s` the portfolio ROI is the ratio
//! `f_s(x) = Σ x_i R_si / Σ x_i I_si`; expected ROI is the plain mean over
//! the equiprobable scenarios. Risk is the CVaR deviation
//! `ROI(x) - (mean of the worst (1-β) mass of f)`, computed by sorting.
//! All quantities are invariant under `x -> λx`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::ScenarioSet;

pub mod smooth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("portfolio has zero total quantity, ROI ratio undefined")]
    ZeroPortfolio,
    #[error("portfolio sums to {sum} but budget is {budget}")]
    BudgetMismatch { sum: f64, budget: f64 },
    #[error("negative quantity {value} for asset {index}")]
    NegativeQuantity { index: usize, value: f64 },
    #[error("portfolio has {got} entries, universe has {expected} assets")]
    Dimension { got: usize, expected: usize },
    #[error("budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("smoothing tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("{what}: denominator {value} too close to zero")]
    Scale { what: &'static str, value: f64 },
}

/// Production quantities `x` with their budget `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    x: Vec<f64>,
    budget: f64,
}

impl Portfolio {
    pub const BUDGET_TOLERANCE: f64 = 1e-9;

    pub fn new(x: Vec<f64>, budget: f64) -> Result<Self, MetricsError> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(MetricsError::InvalidBudget(budget));
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(MetricsError::NegativeQuantity { index, value });
        }
        let sum: f64 = x.iter().sum();
        if (sum - budget).abs() > Self::BUDGET_TOLERANCE * budget {
            return Err(MetricsError::BudgetMismatch { sum, budget });
        }
        Ok(Self { x, budget })
    }

    /// Uses the quantity total as the budget.
    pub fn from_quantities(x: Vec<f64>) -> Result<Self, MetricsError> {
        let sum: f64 = x.iter().sum();
        if !(sum > 0.0) {
            return Err(MetricsError::ZeroPortfolio);
        }
        Self::new(x, sum)
    }

    pub fn uniform(n: usize, budget: f64) -> Self {
        Self { x: vec![budget / n as f64; n], budget }
    }

    pub fn concentrated(n: usize, asset: usize, budget: f64) -> Self {
        let mut x = vec![0.0; n];
        x[asset] = budget;
        Self { x, budget }
    }

    pub fn quantities(&self) -> &[f64] {
        &self.x
    }

    pub fn into_quantities(self) -> Vec<f64> {
        self.x
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn shares(&self) -> Vec<f64> {
        self.x.iter().map(|v| v / self.budget).collect()
    }
}

impl Deref for Portfolio {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.x
    }
}

/// Which tail of the ROI distribution the deviation measure looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RiskConvention {
    /// Loss is `-f`: risk is ROI minus the mean of the worst ROI outcomes,
    /// always non-negative.
    #[default]
    LowerTail,
    /// Literal `ReLU(f - α)` auxiliary function: ROI minus the mean of the
    /// best outcomes, always non-positive.
    AsPrinted,
}

impl RiskConvention {
    /// Sign applied to `f` inside the auxiliary function: `z = sign·f - α`.
    pub fn sign(self) -> f64 {
        match self {
            RiskConvention::LowerTail => -1.0,
            RiskConvention::AsPrinted => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSpec {
    pub beta: f64,
    pub convention: RiskConvention,
    /// Softplus scale, relative to the scenario ratio range.
    pub smoothing_tau: f64,
}

impl Default for RiskSpec {
    fn default() -> Self {
        Self { beta: 0.9, convention: RiskConvention::LowerTail, smoothing_tau: 1e-4 }
    }
}

impl RiskSpec {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(MetricsError::InvalidBeta(self.beta));
        }
        if !(self.smoothing_tau > 0.0 && self.smoothing_tau.is_finite()) {
            return Err(MetricsError::InvalidTau(self.smoothing_tau));
        }
        Ok(())
    }

    /// Tail mass measured in scenarios, `(1-β)·m`.
    pub fn tail_mass(&self, m: usize) -> f64 {
        (1.0 - self.beta) * m as f64
    }

    /// Absolute softplus scale for a dataset.
    pub fn absolute_tau(&self, set: &ScenarioSet) -> f64 {
        let (lo, hi) = set.ratio_range();
        let range = hi - lo;
        self.smoothing_tau * if range > 0.0 { range } else { hi.abs().max(1.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub roi: f64,
    pub risk: f64,
    pub hhi: f64,
}

/// Per-scenario ratios and denominators at one portfolio.
#[derive(Debug, Clone)]
pub struct ScenarioEval {
    /// `f_s` for each scenario.
    pub roi: Vec<f64>,
    /// `Σ_i x_i I_si` for each scenario.
    pub denominator: Vec<f64>,
}

impl ScenarioEval {
    pub fn new(x: &[f64], set: &ScenarioSet) -> Result<Self, MetricsError> {
        check_dim(x, set)?;
        if !(x.iter().sum::<f64>() > 0.0) {
            return Err(MetricsError::ZeroPortfolio);
        }
        let m = set.m();
        let mut roi = Vec::with_capacity(m);
        let mut denominator = Vec::with_capacity(m);
        for s in 0..m {
            let (num, den) = set
                .returns_row(s)
                .iter()
                .zip(set.investments_row(s))
                .zip(x)
                .fold((0.0, 0.0), |(num, den), ((r, i), xi)| (num + xi * r, den + xi * i));
            roi.push(num / den);
            denominator.push(den);
        }
        Ok(Self { roi, denominator })
    }

    pub fn expected_roi(&self) -> f64 {
        mean(&self.roi)
    }

    /// Adds `Σ_s weight_s · ∂f_s/∂x` into `out`, using
    /// `∂f_s/∂x_i = (R_si - f_s I_si) / D_s`.
    pub fn accumulate_gradient(&self, set: &ScenarioSet, weights: &[f64], out: &mut [f64]) {
        for (s, &wt) in weights.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            let f = self.roi[s];
            let scale = wt / self.denominator[s];
            for ((o, r), i) in out.iter_mut().zip(set.returns_row(s)).zip(set.investments_row(s)) {
                *o += scale * (r - f * i);
            }
        }
    }
}

fn check_dim(x: &[f64], set: &ScenarioSet) -> Result<(), MetricsError> {
    if x.len() != set.n() {
        return Err(MetricsError::Dimension { got: x.len(), expected: set.n() });
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn scenario_roi(x: &[f64], set: &ScenarioSet) -> Result<Vec<f64>, MetricsError> {
    Ok(ScenarioEval::new(x, set)?.roi)
}

pub fn expected_roi(x: &[f64], set: &ScenarioSet) -> Result<f64, MetricsError> {
    Ok(ScenarioEval::new(x, set)?.expected_roi())
}

/// Mean of the lowest `(1-β)` probability mass of equiprobable `values`,
/// taking a fractional share of the boundary scenario.
pub fn lower_tail_mean(values: &[f64], beta: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    tail_mean_sorted(&sorted, beta)
}

/// Mean of the highest `(1-β)` probability mass.
pub fn upper_tail_mean(values: &[f64], beta: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    tail_mean_sorted(&sorted, beta)
}

fn tail_mean_sorted(sorted: &[f64], beta: f64) -> f64 {
    let m = sorted.len();
    let mass = ((1.0 - beta) * m as f64).min(m as f64);
    let full = (mass.floor() as usize).min(m);
    let mut acc: f64 = sorted[..full].iter().sum();
    let frac = mass - full as f64;
    if full < m && frac > 0.0 {
        acc += frac * sorted[full];
    }
    acc / mass
}

/// CVaR deviation from precomputed scenario ROIs.
pub fn risk_from_values(values: &[f64], spec: &RiskSpec) -> f64 {
    let roi = mean(values);
    match spec.convention {
        RiskConvention::LowerTail => roi - lower_tail_mean(values, spec.beta),
        RiskConvention::AsPrinted => roi - upper_tail_mean(values, spec.beta),
    }
}

pub fn cvar_deviation_exact(x: &[f64], set: &ScenarioSet, spec: &RiskSpec) -> Result<f64, MetricsError> {
    spec.validate()?;
    Ok(risk_from_values(&scenario_roi(x, set)?, spec))
}

/// Piecewise-linear auxiliary function `α + mean ReLU(sign·f - α) / (1-β)`.
pub fn f_beta_values(values: &[f64], alpha: f64, spec: &RiskSpec) -> f64 {
    let sign = spec.convention.sign();
    let hinge: f64 = values.iter().map(|f| (sign * f - alpha).max(0.0)).sum();
    alpha + hinge / spec.tail_mass(values.len())
}

pub fn f_beta(x: &[f64], alpha: f64, set: &ScenarioSet, spec: &RiskSpec) -> Result<f64, MetricsError> {
    spec.validate()?;
    Ok(f_beta_values(&scenario_roi(x, set)?, alpha, spec))
}

pub fn hhi(portfolio: &Portfolio) -> f64 {
    hhi_of(portfolio.quantities(), portfolio.budget())
}

/// `Σ (x_i / B)²`.
pub fn hhi_of(x: &[f64], budget: f64) -> f64 {
    x.iter().map(|v| (v / budget).powi(2)).sum()
}

pub fn evaluate(x: &[f64], budget: f64, set: &ScenarioSet, spec: &RiskSpec) -> Result<MetricTriple, MetricsError> {
    spec.validate()?;
    let values = scenario_roi(x, set)?;
    Ok(MetricTriple { roi: mean(&values), risk: risk_from_values(&values, spec), hhi: hhi_of(x, budget) })
}

pub fn evaluate_portfolio(p: &Portfolio, set: &ScenarioSet, spec: &RiskSpec) -> Result<MetricTriple, MetricsError> {
    evaluate(p.quantities(), p.budget(), set, spec)
}

/// Mean absolute metrics over a reference set of non-dominated portfolios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontStats {
    pub mean_abs_roi: f64,
    pub mean_abs_risk: f64,
    pub mean_abs_hhi: f64,
}

impl FrontStats {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a MetricTriple>) -> Option<Self> {
        let (mut roi, mut risk, mut hhi, mut k) = (0.0, 0.0, 0.0, 0usize);
        for t in triples {
            roi += t.roi.abs();
            risk += t.risk.abs();
            hhi += t.hhi.abs();
            k += 1;
        }
        (k > 0).then(|| {
            let k = k as f64;
            Self { mean_abs_roi: roi / k, mean_abs_risk: risk / k, mean_abs_hhi: hhi / k }
        })
    }
}

/// HHI rescaling for the penalty strategy:
/// `(w·|ROI| + (1-w)·|Risk|) / |HHI|` with front means.
///
/// Note the weight placement: `w` multiplies the ROI mean even though `w`
/// weighs risk in the objective. This mirrors the published formula.
pub fn theta1(stats: &FrontStats, w: f64) -> Result<f64, MetricsError> {
    if !(stats.mean_abs_hhi > 0.0) {
        return Err(MetricsError::Scale { what: "theta1 HHI mean", value: stats.mean_abs_hhi });
    }
    Ok((w * stats.mean_abs_roi + (1.0 - w) * stats.mean_abs_risk) / stats.mean_abs_hhi)
}

/// Relative guard on the `ROI - Risk` denominator of [`theta2`].
pub const THETA2_EPS: f64 = 1e-12;

/// `HHI(x*) / (ROI(x*) - Risk(x*))`.
pub fn theta2(baseline: &MetricTriple) -> Result<f64, MetricsError> {
    let gap = baseline.roi - baseline.risk;
    if !(gap.abs() > THETA2_EPS * baseline.roi.abs()) || gap == 0.0 {
        return Err(MetricsError::Scale { what: "theta2 ROI - Risk", value: gap });
    }
    Ok(baseline.hhi / gap)
}

/// `max_j mean_s R_sj/I_sj` and its (lowest-index) argmax.
pub fn roi_upper_bound(set: &ScenarioSet) -> (f64, usize) {
    (0..set.n())
        .map(|j| (set.mean_ratio(j), j))
        .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}
