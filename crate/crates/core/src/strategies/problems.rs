use crate::metrics::smooth::{SmoothedTail, TailSmoother};
use crate::metrics::{hhi_of, MetricsError, RiskConvention, RiskSpec, ScenarioEval};
use crate::scenario::ScenarioSet;
use crate::solver::{ConstraintSet, ConstraintValue, EvalOptions, Evaluation, Problem};

fn scenario_eval(x: &[f64], set: &ScenarioSet) -> ScenarioEval {
    ScenarioEval::new(x, set).expect("solver iterates lie on the budget simplex")
}

fn hhi_gradient(x: &[f64], budget: f64, weight: f64, out: &mut [f64]) {
    let k = 2.0 * weight / (budget * budget);
    for (o, v) in out.iter_mut().zip(x) {
        *o += k * v;
    }
}

/// Minimization form of the weighted mean-risk objective with an optional
/// HHI penalty: `-(1-w)·ROI + w·Risk_τ + c·HHI`, where `Risk_τ` uses the
/// softplus-smoothed auxiliary function at its optimal `α`.
pub struct MeanRiskProblem<'a> {
    set: &'a ScenarioSet,
    constraints: ConstraintSet,
    w: f64,
    hhi_weight: f64,
    spec: RiskSpec,
    tau: f64,
}

impl<'a> MeanRiskProblem<'a> {
    pub fn new(
        set: &'a ScenarioSet,
        constraints: ConstraintSet,
        w: f64,
        hhi_weight: f64,
        spec: RiskSpec,
    ) -> Result<Self, MetricsError> {
        spec.validate()?;
        if constraints.dim() != set.n() {
            return Err(MetricsError::Dimension { got: constraints.dim(), expected: set.n() });
        }
        Ok(Self { set, constraints, w, hhi_weight, spec, tau: spec.absolute_tau(set) })
    }

    /// The same objective on exact metrics.
    pub fn exact_objective(&self, roi: f64, risk: f64, hhi: f64) -> f64 {
        -(1.0 - self.w) * roi + self.w * risk + self.hhi_weight * hhi
    }
}

impl Problem for MeanRiskProblem<'_> {
    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn evaluate(&self, x: &[f64], alpha: Option<f64>, opts: EvalOptions) -> Evaluation {
        let se = scenario_eval(x, self.set);
        let smoother = TailSmoother::new(&self.spec, self.tau * opts.smoothing);
        let tail = match alpha {
            Some(a) => smoother.at(&se.roi, a),
            None => smoother.minimum(&se.roi),
        };
        let sign = self.spec.convention.sign();
        let roi = se.expected_roi();
        let risk = roi - sign * tail.value;
        let budget = self.constraints.budget;
        let mut value = -(1.0 - self.w) * roi + self.w * risk;
        if self.hhi_weight != 0.0 {
            value += self.hhi_weight * hhi_of(x, budget);
        }
        let mut gradient = Vec::new();
        if opts.gradient {
            let m = se.roi.len() as f64;
            let weights: Vec<f64> =
                tail.d_roi.iter().map(|d| (2.0 * self.w - 1.0) / m - self.w * sign * d).collect();
            gradient = vec![0.0; x.len()];
            se.accumulate_gradient(self.set, &weights, &mut gradient);
            if self.hhi_weight != 0.0 {
                hhi_gradient(x, budget, self.hhi_weight, &mut gradient);
            }
        }
        Evaluation {
            value,
            gradient,
            alpha: Some(tail.alpha),
            d_alpha: -self.w * sign * tail.d_alpha,
            constraints: Vec::new(),
        }
    }
}

/// Bounds of the tolerance region around a baseline.
#[derive(Debug, Clone, Copy)]
pub struct ToleranceBounds {
    /// `ROI(x) ≥ roi_min`.
    pub roi_min: f64,
    /// Surrogate risk `≤ risk_max`.
    pub risk_max: f64,
}

/// `HHI + c·F_τ(x, α)` subject to `ROI ≥ roi_min` and the surrogate risk
/// `ROI ± F_τ(x, α) ≤ risk_max`.
///
/// Under [`RiskConvention::LowerTail`] the objective and the risk
/// constraint both increase with `F_τ`, so `α = argmin F_τ` is optimal for
/// every `x`. Under [`RiskConvention::AsPrinted`] the `c·F` term enters with
/// a minus sign and `α` is confined to the scenario ratio range, where the
/// objective is minimized at an endpoint.
pub struct ConstrainedProblem<'a> {
    set: &'a ScenarioSet,
    constraints: ConstraintSet,
    spec: RiskSpec,
    tau: f64,
    tail_weight: f64,
    bounds: ToleranceBounds,
}

impl<'a> ConstrainedProblem<'a> {
    pub fn new(
        set: &'a ScenarioSet,
        constraints: ConstraintSet,
        spec: RiskSpec,
        tail_weight: f64,
        bounds: ToleranceBounds,
    ) -> Result<Self, MetricsError> {
        spec.validate()?;
        if constraints.dim() != set.n() {
            return Err(MetricsError::Dimension { got: constraints.dim(), expected: set.n() });
        }
        Ok(Self { set, constraints, spec, tau: spec.absolute_tau(set), tail_weight, bounds })
    }

    fn objective_sign(&self) -> f64 {
        match self.spec.convention {
            RiskConvention::LowerTail => 1.0,
            RiskConvention::AsPrinted => -1.0,
        }
    }

    fn pick_tail(&self, smoother: &TailSmoother, roi: &[f64]) -> SmoothedTail {
        match self.spec.convention {
            RiskConvention::LowerTail => smoother.minimum(roi),
            RiskConvention::AsPrinted => {
                let (lo, hi) = self.set.ratio_range();
                let a = smoother.at(roi, lo);
                let b = smoother.at(roi, hi);
                if b.value > a.value {
                    b
                } else {
                    a
                }
            }
        }
    }

    /// Surrogate risk `ROI - sign·F_τ(x, α)` at the final smoothing scale.
    pub fn surrogate_risk(&self, x: &[f64], alpha: f64) -> f64 {
        let se = scenario_eval(x, self.set);
        let tail = TailSmoother::new(&self.spec, self.tau).at(&se.roi, alpha);
        se.expected_roi() - self.spec.convention.sign() * tail.value
    }

    /// The objective on exact metrics, with `min_α F` in place of `F_τ`.
    pub fn exact_objective(&self, roi: f64, risk: f64, hhi: f64) -> f64 {
        let f_min = self.spec.convention.sign() * (roi - risk);
        hhi + self.objective_sign() * self.tail_weight * f_min
    }
}

impl Problem for ConstrainedProblem<'_> {
    fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn evaluate(&self, x: &[f64], alpha: Option<f64>, opts: EvalOptions) -> Evaluation {
        let se = scenario_eval(x, self.set);
        let smoother = TailSmoother::new(&self.spec, self.tau * opts.smoothing);
        let tail = match alpha {
            Some(a) => smoother.at(&se.roi, a),
            None => self.pick_tail(&smoother, &se.roi),
        };
        let sign = self.spec.convention.sign();
        let os = self.objective_sign();
        let roi = se.expected_roi();
        let budget = self.constraints.budget;
        let value = hhi_of(x, budget) + os * self.tail_weight * tail.value;
        let g_roi = self.bounds.roi_min - roi;
        // Coarser scales overestimate the final-scale surrogate by at most
        // `(τ_k - τ)·ln 2` per scenario term; relaxing by that keeps every
        // stage feasible wherever the final one is.
        let relax = (opts.smoothing - 1.0).max(0.0) * self.tau * std::f64::consts::LN_2 * se.roi.len() as f64
            / self.spec.tail_mass(se.roi.len());
        let g_risk = roi - sign * tail.value - self.bounds.risk_max - relax;
        let (mut gradient, mut grad_roi, mut grad_risk) = (Vec::new(), Vec::new(), Vec::new());
        if opts.gradient {
            let n = x.len();
            let m = se.roi.len() as f64;
            gradient = vec![0.0; n];
            let w_obj: Vec<f64> = tail.d_roi.iter().map(|d| os * self.tail_weight * d).collect();
            se.accumulate_gradient(self.set, &w_obj, &mut gradient);
            hhi_gradient(x, budget, 1.0, &mut gradient);
            grad_roi = vec![0.0; n];
            se.accumulate_gradient(self.set, &vec![-1.0 / m; se.roi.len()], &mut grad_roi);
            grad_risk = vec![0.0; n];
            let w_risk: Vec<f64> = tail.d_roi.iter().map(|d| 1.0 / m - sign * d).collect();
            se.accumulate_gradient(self.set, &w_risk, &mut grad_risk);
        }
        Evaluation {
            value,
            gradient,
            alpha: Some(tail.alpha),
            d_alpha: os * self.tail_weight * tail.d_alpha,
            constraints: vec![
                ConstraintValue { value: g_roi, gradient: grad_roi, d_alpha: 0.0 },
                ConstraintValue { value: g_risk, gradient: grad_risk, d_alpha: -sign * tail.d_alpha },
            ],
        }
    }
}
