use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::constraints::LinearRow;
use super::{project_capped_simplex, EvalOptions, Evaluation, Problem, Solution, SolverConfig, SolverError, TraceRecord};
use crate::metrics::hhi_of;

/// Objectives closer than this (relative) are ties, broken by HHI then `x`.
const TIE_TOLERANCE: f64 = 1e-9;
/// Accepted steps over which a merit change at rounding level means a stall.
const STALL_WINDOW: usize = 20;

/// Runs from `x0` plus, when `config.multistart > 1`, the default start
/// set, and returns the best local solution.
pub fn minimize(problem: &dyn Problem, x0: &[f64], config: &SolverConfig) -> Result<Solution, SolverError> {
    let cs = problem.constraints();
    if x0.len() != cs.dim() {
        return Err(SolverError::Dimension { got: x0.len(), expected: cs.dim() });
    }
    cs.validate()?;
    let mut starts = vec![x0.to_vec()];
    if config.multistart > 1 {
        for s in default_starts(cs, config.multistart, config.seed)? {
            if starts.len() == config.multistart {
                break;
            }
            if !starts.iter().any(|t| t == &s) {
                starts.push(s);
            }
        }
    }
    minimize_from(problem, &starts, config)
}

/// Uniform portfolio, every vertex (projected onto the caps), then
/// Dirichlet(1, …, 1) draws, until `count` starts exist.
pub fn default_starts(cs: &super::ConstraintSet, count: usize, seed: u64) -> Result<Vec<Vec<f64>>, SolverError> {
    let n = cs.dim();
    let b = cs.budget;
    let mut starts = vec![project_capped_simplex(&vec![b / n as f64; n], b, &cs.asset_caps)?];
    for j in 0..n {
        if starts.len() >= count {
            break;
        }
        let mut v = vec![0.0; n];
        v[j] = b;
        starts.push(project_capped_simplex(&v, b, &cs.asset_caps)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let v: Vec<f64> = draws.iter().map(|d| b * d / total).collect();
        starts.push(project_capped_simplex(&v, b, &cs.asset_caps)?);
    }
    Ok(starts)
}

/// Solves from each start (in parallel) and picks the best by
/// feasibility, objective, HHI and finally lexicographic `x`.
pub fn minimize_from(problem: &dyn Problem, starts: &[Vec<f64>], config: &SolverConfig) -> Result<Solution, SolverError> {
    config.validate()?;
    let cs = problem.constraints();
    cs.validate()?;
    if starts.is_empty() {
        return Err(SolverError::InvalidConfig("no start points".into()));
    }
    if let Some(s) = starts.iter().find(|s| s.len() != cs.dim()) {
        return Err(SolverError::Dimension { got: s.len(), expected: cs.dim() });
    }
    let engine = Engine::new(problem, config)?;
    let solutions: Vec<Solution> = starts
        .par_iter()
        .enumerate()
        .map(|(k, s)| engine.run(s, k))
        .collect::<Result<_, _>>()?;
    let mut best: Option<Solution> = None;
    for sol in solutions {
        best = Some(match best {
            None => sol,
            Some(b) => {
                if better(&sol, &b, config.constraint_tol) {
                    sol
                } else {
                    b
                }
            }
        });
    }
    Ok(best.expect("at least one start"))
}

fn better(a: &Solution, b: &Solution, tol: f64) -> bool {
    let fa = a.max_violation <= tol;
    let fb = b.max_violation <= tol;
    if fa != fb {
        return fa;
    }
    if !fa {
        return a.max_violation < b.max_violation;
    }
    let scale = 1.0 + a.objective.abs().max(b.objective.abs());
    if a.objective < b.objective - TIE_TOLERANCE * scale {
        return true;
    }
    if a.objective > b.objective + TIE_TOLERANCE * scale {
        return false;
    }
    let ha = hhi_of(&a.x, a.budget);
    let hb = hhi_of(&b.x, b.budget);
    if (ha - hb).abs() > 1e-12 {
        return ha < hb;
    }
    a.x.iter().zip(&b.x).find(|(u, v)| u != v).is_some_and(|(u, v)| u < v)
}

struct Engine<'a> {
    problem: &'a dyn Problem,
    config: &'a SolverConfig,
    budget: f64,
    /// Caps in share space.
    caps: Vec<f64>,
    rows: Vec<LinearRow>,
    deadline: Option<Instant>,
}

struct Merit {
    value: f64,
    grad: Vec<f64>,
}

struct Inner {
    p: Vec<f64>,
    iterations: usize,
    converged: bool,
    timed_out: bool,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a dyn Problem, config: &'a SolverConfig) -> Result<Self, SolverError> {
        let cs = problem.constraints();
        let budget = cs.budget;
        Ok(Self {
            problem,
            config,
            budget,
            caps: cs.asset_caps.iter().map(|u| u / budget).collect(),
            rows: cs.linear_rows(),
            deadline: config.time_budget_ms.map(|ms| Instant::now() + Duration::from_millis(ms)),
        })
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        project_capped_simplex(v, 1.0, &self.caps).expect("caps validated against the budget")
    }

    fn to_x(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|v| v * self.budget).collect()
    }

    fn evaluate(&self, p: &[f64], smoothing: f64, gradient: bool) -> (Vec<f64>, Evaluation) {
        let x = self.to_x(p);
        let ev = self.problem.evaluate(&x, None, EvalOptions { gradient, smoothing });
        (x, ev)
    }

    fn constraint_values(&self, x: &[f64], ev: &Evaluation) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(x)).chain(ev.constraints.iter().map(|c| c.value)).collect()
    }

    /// PHR augmented Lagrangian in share space.
    fn merit(&self, p: &[f64], lam: &[f64], rho: f64, smoothing: f64) -> Merit {
        let (x, ev) = self.evaluate(p, smoothing, true);
        let b = self.budget;
        let mut value = ev.value;
        let mut grad: Vec<f64> = ev.gradient.iter().map(|g| g * b).collect();
        let g = self.constraint_values(&x, &ev);
        for (k, (&gk, &lk)) in g.iter().zip(lam).enumerate() {
            let t = lk + rho * gk;
            if t > 0.0 {
                value += (t * t - lk * lk) / (2.0 * rho);
                if k < self.rows.len() {
                    let row = &self.rows[k];
                    for (gi, a) in grad.iter_mut().zip(&row.coefficients) {
                        *gi += t * a * b / row.scale;
                    }
                } else {
                    for (gi, a) in grad.iter_mut().zip(&ev.constraints[k - self.rows.len()].gradient) {
                        *gi += t * a * b;
                    }
                }
            } else {
                value -= lk * lk / (2.0 * rho);
            }
        }
        Merit { value, grad }
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    #[allow(clippy::too_many_arguments)]
    fn inner(
        &self,
        p0: &[f64],
        lam: &[f64],
        rho: f64,
        smoothing: f64,
        tag: (usize, usize, usize),
        violation: f64,
        trace: &mut Vec<TraceRecord>,
    ) -> Inner {
        let cfg = self.config;
        let mut p = p0.to_vec();
        let mut cur = self.merit(&p, lam, rho, smoothing);
        let gmax = cur.grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        let mut step = if gmax > 0.0 { (1.0 / gmax).clamp(1e-12, 1e12) } else { 1.0 };
        let mut reference = (cur.value, 0usize);
        for it in 0..cfg.max_iterations {
            if self.timed_out() {
                return Inner { p, iterations: it, converged: false, timed_out: true };
            }
            let full: Vec<f64> = p.iter().zip(&cur.grad).map(|(v, g)| v - g).collect();
            let pg = self.project(&full);
            let pg_norm = pg.iter().zip(&p).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            if pg_norm <= cfg.pg_tol {
                return Inner { p, iterations: it, converged: true, timed_out: false };
            }
            let trial: Vec<f64> = p.iter().zip(&cur.grad).map(|(v, g)| v - step * g).collect();
            let mut d: Vec<f64> = self.project(&trial).iter().zip(&p).map(|(u, v)| u - v).collect();
            let mut gd: f64 = d.iter().zip(&cur.grad).map(|(a, b)| a * b).sum();
            if !(gd < 0.0) {
                // The spectral step collapsed; fall back to the unit step.
                d = pg.iter().zip(&p).map(|(u, v)| u - v).collect();
                gd = d.iter().zip(&cur.grad).map(|(a, b)| a * b).sum();
                if !(gd < 0.0) {
                    return Inner { p, iterations: it, converged: true, timed_out: false };
                }
            }
            let mut theta = 1.0;
            let mut accepted = None;
            for _ in 0..cfg.max_backtracks {
                let cand: Vec<f64> = p.iter().zip(&d).map(|(v, di)| v + theta * di).collect();
                let m = self.merit(&cand, lam, rho, smoothing);
                if m.value <= cur.value + cfg.armijo * theta * gd {
                    accepted = Some((cand, m));
                    break;
                }
                theta *= cfg.backtrack;
            }
            let Some((cand, next)) = accepted else {
                // No representable decrease left along the direction.
                let converged = pg_norm <= cfg.stall_tol || gd.abs() <= 1e-12 * (1.0 + cur.value.abs());
                return Inner { p, iterations: it, converged, timed_out: false };
            };
            debug_assert!(next.value <= cur.value, "merit increased: {} -> {}", cur.value, next.value);
            let (mut ss, mut sy) = (0.0, 0.0);
            for ((c, v), (gn, go)) in cand.iter().zip(&p).zip(next.grad.iter().zip(&cur.grad)) {
                let s = c - v;
                ss += s * s;
                sy += s * (gn - go);
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (step * 10.0).min(1e12) };
            if cfg.trace {
                trace.push(TraceRecord {
                    start: tag.0,
                    stage: tag.1,
                    outer: tag.2,
                    iteration: it,
                    merit: next.value,
                    pg_norm,
                    max_violation: violation,
                    penalty: rho,
                });
            }
            p = cand;
            cur = next;
            if it - reference.1 >= STALL_WINDOW {
                if reference.0 - cur.value <= 8.0 * f64::EPSILON * (1.0 + cur.value.abs()) {
                    return Inner { p, iterations: it + 1, converged: pg_norm <= cfg.stall_tol, timed_out: false };
                }
                reference = (cur.value, it);
            }
        }
        Inner { p, iterations: cfg.max_iterations, converged: false, timed_out: false }
    }

    fn run(&self, x0: &[f64], start: usize) -> Result<Solution, SolverError> {
        let cfg = self.config;
        let p0: Vec<f64> = x0.iter().map(|v| v / self.budget).collect();
        let mut p = self.project(&p0);
        let (x, ev) = self.evaluate(&p, cfg.smoothing_schedule[0], false);
        let k = self.constraint_values(&x, &ev).len();
        let mut lam = vec![0.0; k];
        let mut rho;
        let mut iterations = 0;
        let mut converged = false;
        let mut trace = Vec::new();
        let mut violation = max_violation(&self.constraint_values(&x, &ev));
        'stages: for (stage, &smoothing) in cfg.smoothing_schedule.iter().enumerate() {
            converged = false;
            rho = cfg.penalty_init;
            let mut prev = f64::INFINITY;
            for outer in 0..cfg.max_outer {
                let inner = self.inner(&p, &lam, rho, smoothing, (start, stage, outer), violation, &mut trace);
                p = inner.p;
                iterations += inner.iterations;
                let (x, ev) = self.evaluate(&p, smoothing, false);
                let g = self.constraint_values(&x, &ev);
                violation = max_violation(&g);
                if inner.timed_out {
                    break 'stages;
                }
                if inner.converged && violation <= cfg.constraint_tol {
                    converged = true;
                    break;
                }
                if k == 0 {
                    break;
                }
                for (l, gk) in lam.iter_mut().zip(&g) {
                    *l = (*l + rho * gk).max(0.0);
                }
                if rho >= cfg.penalty_max && violation > 0.9 * prev {
                    break;
                }
                if violation > 0.25 * prev {
                    rho = (rho * cfg.penalty_growth).min(cfg.penalty_max);
                }
                prev = violation;
            }
        }
        let p = self.project(&p);
        let last = *cfg.smoothing_schedule.last().expect("validated non-empty");
        let (x, ev) = self.evaluate(&p, last, false);
        let residuals = self.constraint_values(&x, &ev);
        let max_violation = max_violation(&residuals);
        let sum: f64 = x.iter().sum();
        let on_simplex = (sum - self.budget).abs() <= cfg.projection_tol * self.budget;
        Ok(Solution {
            x,
            budget: self.budget,
            alpha: ev.alpha,
            objective: ev.value,
            residuals,
            max_violation,
            iterations,
            converged: converged && on_simplex && max_violation <= cfg.constraint_tol,
            start_index: start,
            trace,
        })
    }
}

fn max_violation(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |a, v| a.max(*v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{check_gradient, ConstraintSet, ConstraintValue, GroupCap};

    /// `‖x - c‖²` with an optional linear constraint list.
    struct Quadratic {
        cs: ConstraintSet,
        target: Vec<f64>,
    }

    impl Problem for Quadratic {
        fn constraints(&self) -> &ConstraintSet {
            &self.cs
        }

        fn evaluate(&self, x: &[f64], _alpha: Option<f64>, _opts: EvalOptions) -> Evaluation {
            let value = x.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum();
            let gradient = x.iter().zip(&self.target).map(|(a, b)| 2.0 * (a - b)).collect();
            Evaluation { value, gradient, ..Default::default() }
        }
    }

    /// Quadratic with a smooth constraint `x_0² ≤ r`.
    struct Disk {
        inner: Quadratic,
        r: f64,
    }

    impl Problem for Disk {
        fn constraints(&self) -> &ConstraintSet {
            &self.inner.cs
        }

        fn evaluate(&self, x: &[f64], alpha: Option<f64>, opts: EvalOptions) -> Evaluation {
            let mut ev = self.inner.evaluate(x, alpha, opts);
            let mut g = vec![0.0; x.len()];
            g[0] = 2.0 * x[0];
            ev.constraints.push(ConstraintValue { value: x[0] * x[0] - self.r, gradient: g, d_alpha: 0.0 });
            ev
        }
    }

    #[test]
    fn quadratic_matches_projection() {
        let target = vec![3.0, -1.0, 0.5, 2.0];
        let mut cs = ConstraintSet::unconstrained(4, 2.0);
        cs.asset_caps = vec![1.2, 5.0, 5.0, 0.7];
        let q = Quadratic { cs: cs.clone(), target: target.clone() };
        let cfg = SolverConfig::default();
        let sol = minimize(&q, &[0.5; 4], &cfg).unwrap();
        let expect = project_capped_simplex(&target, 2.0, &cs.asset_caps).unwrap();
        assert!(sol.converged);
        for (a, b) in sol.x.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-7, "{:?} vs {:?}", sol.x, expect);
        }
    }

    #[test]
    fn linear_group_cap_is_enforced() {
        let mut cs = ConstraintSet::unconstrained(3, 1.0);
        cs.country_caps.push(GroupCap { name: "g".into(), members: vec![0, 1], cap: 0.5 });
        let q = Quadratic { cs, target: vec![1.0, 1.0, 0.0] };
        let sol = minimize(&q, &[1.0 / 3.0; 3], &SolverConfig::default()).unwrap();
        assert!(sol.converged, "{sol:?}");
        assert!(sol.x[0] + sol.x[1] <= 0.5 + 1e-6);
        assert!((sol.x[0] - 0.25).abs() < 1e-5 && (sol.x[2] - 0.5).abs() < 1e-5, "{:?}", sol.x);
    }

    #[test]
    fn smooth_constraint_via_multipliers() {
        let disk = Disk { inner: Quadratic { cs: ConstraintSet::unconstrained(2, 1.0), target: vec![1.0, 0.0] }, r: 0.25 };
        let sol = minimize(&disk, &[0.2, 0.8], &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 0.5).abs() < 1e-6, "{:?}", sol.x);
        assert!(sol.max_violation <= 1e-6);
    }

    #[test]
    fn trace_is_monotone_within_subproblems() {
        let q = Quadratic { cs: ConstraintSet::unconstrained(3, 1.0), target: vec![0.9, 0.3, -0.4] };
        let cfg = SolverConfig { trace: true, multistart: 1, ..SolverConfig::default() };
        let sol = minimize(&q, &[0.0, 0.0, 1.0], &cfg).unwrap();
        assert!(!sol.trace.is_empty());
        for w in sol.trace.windows(2) {
            if (w[0].stage, w[0].outer) == (w[1].stage, w[1].outer) {
                assert!(w[1].merit <= w[0].merit);
            }
        }
        assert_eq!(sol.trace_jsonl().lines().count(), sol.trace.len());
    }

    #[test]
    fn default_starts_cover_vertices() {
        let cs = ConstraintSet::unconstrained(6, 10.0);
        let starts = default_starts(&cs, 8, 1).unwrap();
        assert_eq!(starts.len(), 8);
        assert_eq!(starts[0], vec![10.0 / 6.0; 6]);
        assert_eq!(starts[3][2], 10.0);
        for s in &starts {
            assert!((s.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_gradient_check() {
        let q = Quadratic { cs: ConstraintSet::unconstrained(3, 1.0), target: vec![0.1, 0.2, 0.7] };
        assert!(check_gradient(&q, &[0.3, 0.3, 0.4], None, 1e-6) < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = Quadratic { cs: ConstraintSet::unconstrained(3, 1.0), target: vec![0.0; 3] };
        assert!(matches!(minimize(&q, &[1.0], &SolverConfig::default()), Err(SolverError::Dimension { .. })));
        let cfg = SolverConfig { multistart: 0, ..SolverConfig::default() };
        assert!(matches!(minimize(&q, &[0.3; 3], &cfg), Err(SolverError::InvalidConfig(_))));
        let mut cs = ConstraintSet::unconstrained(2, 1.0);
        cs.asset_caps = vec![0.2, 0.2];
        let q = Quadratic { cs, target: vec![0.0; 2] };
        assert!(matches!(minimize(&q, &[0.5; 2], &SolverConfig::default()), Err(SolverError::Infeasible(_))));
    }
}
