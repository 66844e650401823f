use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use diversify_core::frontier::{pareto_filter, FrontierPoint, StrategyTag};
use diversify_core::metrics::{FrontStats, MetricTriple, RiskSpec};
use diversify_core::scenario::ScenarioSet;
use diversify_core::solver::{ConstraintConfig, ConstraintSet, SolverConfig, SolverError};
use diversify_core::strategies::{
    solve_baseline, BaselineRequest, StrategyError, StrategyResult, DEFAULT_W_GRID, DEFAULT_W_R,
};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub constraints: ConstraintConfig,
    pub risk: RiskSpec,
    pub solver: SolverConfig,
    /// Grid of the cached baseline frontier that feeds θ1.
    pub w_grid: Vec<f64>,
    pub w_r: f64,
    /// Per-request solver budget; an over-budget solve returns its best
    /// iterate with `converged = false`.
    pub time_budget: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            constraints: ConstraintConfig::default(),
            risk: RiskSpec::default(),
            solver: SolverConfig::default(),
            w_grid: DEFAULT_W_GRID.to_vec(),
            w_r: DEFAULT_W_R,
            time_budget: Duration::from_secs(10),
        }
    }
}

/// A loaded scenario set with its resolved constraints. Immutable.
#[derive(Debug)]
pub struct Dataset {
    pub set: ScenarioSet,
    pub constraints: ConstraintSet,
    generation: u64,
}

type BaselineKey = (u64, u64, u64);
type FrontKey = (u64, Vec<u64>, u64);

pub struct AppState {
    pub config: ServerConfig,
    dataset: RwLock<Option<Arc<Dataset>>>,
    generation: AtomicU64,
    baselines: RwLock<HashMap<BaselineKey, Arc<StrategyResult>>>,
    fronts: RwLock<HashMap<FrontKey, FrontStats>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self {
            config,
            dataset: RwLock::new(None),
            generation: AtomicU64::new(0),
            baselines: RwLock::new(HashMap::new()),
            fronts: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_dataset(config: ServerConfig, set: ScenarioSet) -> Result<Self, SolverError> {
        let state = Self::new(config);
        state.load(set)?;
        Ok(state)
    }

    /// Replaces the dataset and drops every cached solve.
    pub fn load(&self, set: ScenarioSet) -> Result<Arc<Dataset>, SolverError> {
        let constraints = self.config.constraints.resolve(&set)?;
        let generation = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        let ds = Arc::new(Dataset { set, constraints, generation });
        *self.dataset.write().expect("dataset lock") = Some(ds.clone());
        self.baselines.write().expect("cache lock").clear();
        self.fronts.write().expect("cache lock").clear();
        Ok(ds)
    }

    pub fn dataset(&self) -> Option<Arc<Dataset>> {
        self.dataset.read().expect("dataset lock").clone()
    }

    pub fn risk(&self, beta: Option<f64>) -> RiskSpec {
        RiskSpec { beta: beta.unwrap_or(self.config.risk.beta), ..self.config.risk }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            time_budget_ms: Some(self.config.time_budget.as_millis() as u64),
            ..self.config.solver.clone()
        }
    }

    pub fn baseline_request(&self, ds: &Dataset, w: f64, risk: RiskSpec) -> BaselineRequest {
        BaselineRequest { w, risk, constraints: ds.constraints.clone(), solver: self.solver() }
    }

    /// Baseline at `w`, solved once per (dataset, w, beta).
    pub fn baseline(&self, ds: &Dataset, w: f64, risk: RiskSpec) -> Result<Arc<StrategyResult>, StrategyError> {
        let key = (ds.generation, w.to_bits(), risk.beta.to_bits());
        if let Some(hit) = self.baselines.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let solved = Arc::new(solve_baseline(&self.baseline_request(ds, w, risk), &ds.set)?);
        let mut cache = self.baselines.write().expect("cache lock");
        Ok(cache.entry(key).or_insert(solved).clone())
    }

    /// Non-dominated statistics of the baseline frontier over the configured grid.
    pub fn front_stats(&self, ds: &Dataset, risk: RiskSpec) -> Result<FrontStats, StrategyError> {
        let key = (ds.generation, self.config.w_grid.iter().map(|w| w.to_bits()).collect(), risk.beta.to_bits());
        if let Some(hit) = self.fronts.read().expect("cache lock").get(&key) {
            return Ok(*hit);
        }
        let points = self.baseline_frontier(ds, risk)?;
        let triples: Vec<MetricTriple> = pareto_filter(&points).iter().map(FrontierPoint::metrics).collect();
        let stats = FrontStats::from_triples(&triples)
            .ok_or_else(|| StrategyError::InvalidRequest("empty baseline frontier".into()))?;
        self.fronts.write().expect("cache lock").insert(key, stats);
        Ok(stats)
    }

    pub fn baseline_frontier(&self, ds: &Dataset, risk: RiskSpec) -> Result<Vec<FrontierPoint>, StrategyError> {
        let mut grid = self.config.w_grid.clone();
        grid.sort_by(|a, b| b.total_cmp(a));
        grid.iter()
            .map(|&w| Ok(FrontierPoint::from_result(w, StrategyTag::Baseline, &*self.baseline(ds, w, risk)?)))
            .collect()
    }
}
