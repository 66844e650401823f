use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::scenario::ScenarioSet;

/// Upper bound on the total production of a group of assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCap {
    pub name: String,
    pub members: Vec<usize>,
    pub cap: f64,
}

/// `Σ κ_i x_i ≤ budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapexLimit {
    pub budget: f64,
    pub unit_cost: Vec<f64>,
}

/// Generic `coefficients · x ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

/// The feasible set: the capped budget simplex plus linear inequalities.
///
/// The simplex and box caps are enforced by projection; everything else
/// goes through the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub budget: f64,
    /// Per-asset caps, `f64::INFINITY` when unbounded.
    pub asset_caps: Vec<f64>,
    pub country_caps: Vec<GroupCap>,
    pub capex: Option<CapexLimit>,
    pub linear: Vec<LinearConstraint>,
}

/// A normalized linear row `(a·x - rhs) / scale ≤ 0`.
#[derive(Debug, Clone)]
pub(crate) struct LinearRow {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
    pub scale: f64,
}

impl LinearRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        let ax: f64 = self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
        (ax - self.rhs) / self.scale
    }
}

impl ConstraintSet {
    pub fn unconstrained(n: usize, budget: f64) -> Self {
        Self {
            budget,
            asset_caps: vec![f64::INFINITY; n],
            country_caps: Vec::new(),
            capex: None,
            linear: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.asset_caps.len()
    }

    pub fn has_linear(&self) -> bool {
        !self.country_caps.is_empty() || self.capex.is_some() || !self.linear.is_empty()
    }

    /// Feasibility pre-check.
    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.dim();
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(SolverError::InvalidConstraints(format!("budget must be positive, got {}", self.budget)));
        }
        if let Some(i) = self.asset_caps.iter().position(|u| !(*u >= 0.0)) {
            return Err(SolverError::InvalidConstraints(format!("asset cap {i} is negative")));
        }
        let cap_total: f64 = self.asset_caps.iter().sum();
        if cap_total < self.budget {
            return Err(SolverError::Infeasible(format!(
                "asset caps sum to {cap_total}, below budget {}",
                self.budget
            )));
        }
        let mut reachable = self.asset_caps.clone();
        for g in &self.country_caps {
            if g.members.iter().any(|&i| i >= n) {
                return Err(SolverError::InvalidConstraints(format!("group {} names an unknown asset", g.name)));
            }
            let group: f64 = g.members.iter().map(|&i| reachable[i]).sum();
            if group > g.cap {
                // Scale the group down to its cap for the reachability bound.
                let f = if group.is_finite() { g.cap / group } else { 0.0 };
                for &i in &g.members {
                    reachable[i] = if group.is_finite() { reachable[i] * f } else { g.cap / g.members.len() as f64 };
                }
            }
        }
        let reach: f64 = reachable.iter().sum();
        if reach < self.budget * (1.0 - 1e-12) {
            return Err(SolverError::Infeasible(format!(
                "country caps allow at most {reach}, below budget {}",
                self.budget
            )));
        }
        if let Some(c) = &self.capex {
            if c.unit_cost.len() != n {
                return Err(SolverError::InvalidConstraints("capex cost vector has wrong length".into()));
            }
            let min = self.min_capex(&c.unit_cost);
            if c.budget < min * (1.0 - 1e-12) {
                return Err(SolverError::Infeasible(format!(
                    "capex budget {} below the cheapest feasible spend {min}",
                    c.budget
                )));
            }
        }
        for l in &self.linear {
            if l.coefficients.len() != n {
                return Err(SolverError::InvalidConstraints("linear constraint has wrong length".into()));
            }
        }
        Ok(())
    }

    /// Cheapest spend on the capped simplex: fill the cheapest assets first.
    fn min_capex(&self, cost: &[f64]) -> f64 {
        let mut order: Vec<usize> = (0..cost.len()).collect();
        order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]));
        let mut left = self.budget;
        let mut spend = 0.0;
        for i in order {
            let take = left.min(self.asset_caps[i]);
            spend += take * cost[i];
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        spend
    }

    pub(crate) fn linear_rows(&self) -> Vec<LinearRow> {
        let n = self.dim();
        let mut rows = Vec::new();
        let scale = |rhs: f64| rhs.abs().max(1e-12);
        for g in &self.country_caps {
            let mut a = vec![0.0; n];
            for &i in &g.members {
                a[i] = 1.0;
            }
            rows.push(LinearRow { coefficients: a, rhs: g.cap, scale: scale(g.cap) });
        }
        if let Some(c) = &self.capex {
            rows.push(LinearRow { coefficients: c.unit_cost.clone(), rhs: c.budget, scale: scale(c.budget) });
        }
        for l in &self.linear {
            rows.push(LinearRow { coefficients: l.coefficients.clone(), rhs: l.rhs, scale: scale(l.rhs) });
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapexRule {
    /// κ_i is the scenario-mean investment per unit.
    #[default]
    Mean,
    /// κ_i is the largest per-unit investment over scenarios.
    WorstCase,
}

/// File/CLI form of a [`ConstraintSet`], resolved against a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub budget: f64,
    /// Uniform cap applied to every asset.
    pub asset_cap: Option<f64>,
    /// Caps by asset label; override `asset_cap`.
    pub asset_caps: BTreeMap<String, f64>,
    /// Caps by country index (as a string key, e.g. `"1"`).
    pub country_caps: BTreeMap<String, f64>,
    pub capex_budget: Option<f64>,
    pub capex_rule: CapexRule,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            budget: 100.0,
            asset_cap: None,
            asset_caps: BTreeMap::new(),
            country_caps: BTreeMap::new(),
            capex_budget: None,
            capex_rule: CapexRule::Mean,
        }
    }
}

impl ConstraintConfig {
    pub fn resolve(&self, set: &ScenarioSet) -> Result<ConstraintSet, SolverError> {
        let n = set.n();
        let labels = set.labels();
        let mut cs = ConstraintSet::unconstrained(n, self.budget);
        for (i, a) in set.assets().iter().enumerate() {
            let mut cap = a.max_production.unwrap_or(f64::INFINITY);
            if let Some(u) = self.asset_cap {
                cap = cap.min(u);
            }
            if let Some(u) = self.asset_caps.get(&labels[i]) {
                cap = cap.min(*u);
            }
            cs.asset_caps[i] = cap;
        }
        for label in self.asset_caps.keys() {
            if !labels.contains(label) {
                return Err(SolverError::InvalidConstraints(format!("unknown asset label {label}")));
            }
        }
        for (key, cap) in &self.country_caps {
            let country: u32 = key
                .trim_start_matches(['C', 'c'])
                .parse()
                .map_err(|_| SolverError::InvalidConstraints(format!("bad country key {key}")))?;
            let members: Vec<usize> = set
                .assets()
                .iter()
                .enumerate()
                .filter(|(_, a)| a.country == country)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                return Err(SolverError::InvalidConstraints(format!("no asset in country {country}")));
            }
            cs.country_caps.push(GroupCap { name: format!("C{country}"), members, cap: *cap });
        }
        if let Some(k) = self.capex_budget {
            let unit_cost = (0..n)
                .map(|i| match self.capex_rule {
                    CapexRule::Mean => set.mean_investment(i),
                    CapexRule::WorstCase => set.max_investment(i),
                })
                .collect();
            cs.capex = Some(CapexLimit { budget: k, unit_cost });
        }
        cs.validate()?;
        Ok(cs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, GeneratorSpec};

    #[test]
    fn resolve_builds_groups_and_capex() {
        let set = generate_synthetic(&GeneratorSpec::default()).unwrap();
        let cfg = ConstraintConfig {
            asset_cap: Some(40.0),
            country_caps: [("1".to_string(), 60.0)].into(),
            capex_budget: Some(1e6),
            ..Default::default()
        };
        let cs = cfg.resolve(&set).unwrap();
        assert_eq!(cs.asset_caps, vec![40.0; 6]);
        assert_eq!(cs.country_caps[0].members.len(), 3);
        assert!(cs.capex.as_ref().unwrap().unit_cost[2] > 0.0);
        assert_eq!(cs.linear_rows().len(), 2);
    }

    #[test]
    fn infeasible_sets_are_rejected() {
        let set = generate_synthetic(&GeneratorSpec::default()).unwrap();
        let tight = ConstraintConfig { asset_cap: Some(10.0), ..Default::default() };
        assert!(matches!(tight.resolve(&set), Err(SolverError::Infeasible(_))));
        let countries = ConstraintConfig {
            country_caps: [("1".to_string(), 20.0), ("2".to_string(), 20.0)].into(),
            ..Default::default()
        };
        assert!(matches!(countries.resolve(&set), Err(SolverError::Infeasible(_))));
        let capex = ConstraintConfig { capex_budget: Some(1.0), ..Default::default() };
        assert!(matches!(capex.resolve(&set), Err(SolverError::Infeasible(_))));
        let unknown = ConstraintConfig { asset_caps: [("T9_C9_Secured".to_string(), 1.0)].into(), ..Default::default() };
        assert!(matches!(unknown.resolve(&set), Err(SolverError::InvalidConstraints(_))));
    }
}
