//! Acceptance suite on the pinned desk instance (n = 6, m = 100, seed 42).
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//! CLI artifacts are produced twice through the real binary; the first copy
//! feeds the criteria that inspect sweep and suite outputs.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use diversify_core::frontier::Frontier;
use diversify_core::metrics::{self, RiskSpec};
use diversify_core::scenario::{generate_synthetic, GeneratorSpec, ScenarioSet};
use diversify_core::solver::{check_gradient, ConstraintConfig, ConstraintSet};
use diversify_core::strategies::{
    solve_baseline, solve_hhi_constrained, solve_hhi_penalty, BaselineRequest, ConstrainedDivRequest,
    ConstrainedProblem, MeanRiskProblem, PenaltyRequest, SuiteArtifact, Theta1, ToleranceBounds, Zone,
    DEFAULT_WD_GRID, DEFAULT_W_GRID,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const B: f64 = 100.0;

type Verdict = Result<String, String>;

/// Exact metrics from the raw matrices with a plain sort.
struct Oracle {
    returns: Vec<Vec<f64>>,
    invest: Vec<Vec<f64>>,
    beta: f64,
}

struct Exact {
    roi: f64,
    risk: f64,
    hhi: f64,
    tail: f64,
}

impl Oracle {
    fn new(set: &ScenarioSet, beta: f64) -> Self {
        Self { returns: set.returns_matrix(), invest: set.investments_matrix(), beta }
    }

    fn ratios(&self, x: &[f64]) -> Vec<f64> {
        self.returns
            .iter()
            .zip(&self.invest)
            .map(|(r, i)| {
                let num: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
                let den: f64 = i.iter().zip(x).map(|(a, b)| a * b).sum();
                num / den
            })
            .collect()
    }

    fn exact(&self, x: &[f64]) -> Exact {
        let f = self.ratios(x);
        let mut sorted = f.clone();
        sorted.sort_by(f64::total_cmp);
        let mass = (1.0 - self.beta) * f.len() as f64;
        let (mut left, mut acc) = (mass, 0.0);
        for v in sorted {
            let take = left.min(1.0);
            if take <= 0.0 {
                break;
            }
            acc += take * v;
            left -= take;
        }
        let tail = acc / mass;
        let roi = f.iter().sum::<f64>() / f.len() as f64;
        let total: f64 = x.iter().sum();
        let hhi = x.iter().map(|v| (v / total).powi(2)).sum();
        Exact { roi, risk: roi - tail, hhi, tail }
    }
}

fn random_portfolio(rng: &mut ChaCha8Rng, n: usize, floor: f64, power: i32) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>().powi(power)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| B * v / total).collect()
}

struct Harness {
    desk: ScenarioSet,
    oracle: Oracle,
    bin: PathBuf,
    root: tempfile::TempDir,
    /// Every portfolio produced anywhere in the suite, with its reported HHI.
    produced: Vec<(String, Vec<f64>, Option<f64>)>,
}

impl Harness {
    fn record(&mut self, origin: impl Into<String>, x: &[f64], reported_hhi: Option<f64>) {
        self.produced.push((origin.into(), x.to_vec(), reported_hhi));
    }

    fn run_cli(&self, run: &str, name: &str, args: &[&str]) -> Result<PathBuf, String> {
        let out = self.root.path().join(run).join(name);
        let status = Command::new(&self.bin)
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| format!("{name}: cannot start binary: {e}"))?;
        if !status.status.success() {
            return Err(format!(
                "{name}: exit {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr).trim()
            ));
        }
        Ok(out)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.root.path().join("a").join(name)
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
    }
    files
}

fn determinism(h: &mut Harness) -> Verdict {
    let portfolio = h.root.path().join("uniform.json");
    fs::write(&portfolio, format!("{{\"x\": {:?}}}", vec![B / 6.0; 6])).unwrap();
    let portfolio = portfolio.to_string_lossy().into_owned();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("generate", vec!["generate", "--seed", "42"]),
        ("frontier", vec!["frontier"]),
        ("penalty", vec!["diversify-penalty"]),
        ("suite", vec!["diversify-constrained"]),
        ("evaluate", vec!["evaluate", "--portfolio", portfolio.as_str()]),
    ];
    let mut compared = 0;
    for (name, args) in &commands {
        let a = h.run_cli("a", name, args)?;
        let b = h.run_cli("b", name, args)?;
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        if ta.keys().ne(tb.keys()) {
            return Err(format!("{name}: file lists differ"));
        }
        if !ta.keys().any(|k| k.ends_with(".json")) {
            return Err(format!("{name}: no JSON artifact"));
        }
        for (file, bytes) in &ta {
            if tb[file] != *bytes {
                return Err(format!("{name}/{file} differs between runs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{} commands, {compared} artifacts byte-identical (JSON, CSV, SVG, manifests)", commands.len()))
}

fn concentration(h: &mut Harness) -> Verdict {
    let cs = ConstraintConfig::default().resolve(&h.desk).map_err(|e| e.to_string())?;
    let r = solve_baseline(&BaselineRequest::new(0.0, cs), &h.desk).map_err(|e| e.to_string())?;
    h.record("concentration", &r.solution.x, Some(r.metrics.hhi));
    let (bound, j_star) = metrics::roi_upper_bound(&h.desk);
    // Independent argmax of mean_s R_j/I_j.
    let m = h.desk.m() as f64;
    let means: Vec<f64> = (0..h.desk.n())
        .map(|j| h.oracle.returns.iter().zip(&h.oracle.invest).map(|(r, i)| r[j] / i[j]).sum::<f64>() / m)
        .collect();
    let oracle_j = (0..means.len()).max_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap();
    let share = r.solution.x[oracle_j] / B;
    let roi = h.oracle.exact(&r.solution.x).roi;
    let detail = format!("j*={oracle_j}, share {share:.6}, |ROI - bound| = {:.2e}", (roi - means[oracle_j]).abs());
    if oracle_j == j_star && share >= 0.999 && (roi - bound).abs() <= 1e-6 && (roi - means[oracle_j]).abs() <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cvar_oracle(h: &mut Harness) -> Verdict {
    let spec = RiskSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let x = random_portfolio(&mut rng, h.desk.n(), 0.0, 3);
        let m = metrics::evaluate(&x, B, &h.desk, &spec).map_err(|e| e.to_string())?;
        let f = h.oracle.ratios(&x);
        let roi = f.iter().sum::<f64>() / f.len() as f64;
        let scale = 1.0 / ((1.0 - spec.beta) * f.len() as f64);
        // F̃ is piecewise linear with kinks at -f_s: a dense grid plus every kink.
        let f_tilde = |a: f64| a + scale * f.iter().map(|v| (-v - a).max(0.0)).sum::<f64>();
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(-v), u.max(-v)));
        let mut alphas: Vec<f64> = (0..=20_000).map(|i| lo + (hi - lo) * i as f64 / 20_000.0).collect();
        alphas.extend(f.iter().map(|v| -v));
        let min_f = alphas.into_iter().map(f_tilde).fold(f64::INFINITY, f64::min);
        let err = (m.risk - (roi + min_f)).abs();
        worst = worst.max(err);
        if err > 1e-8 || m.risk < 0.0 {
            return Err(format!("portfolio {k}: risk {} vs grid {}", m.risk, roi + min_f));
        }
    }
    Ok(format!("200 portfolios, max |exact - grid| = {worst:.2e}, all risks >= 0"))
}

fn gradients(h: &mut Harness) -> Verdict {
    let set = &h.desk;
    let cs = ConstraintSet::unconstrained(set.n(), B);
    let spec = RiskSpec::default();
    let base = MeanRiskProblem::new(set, cs.clone(), 0.6, 0.0, spec).map_err(|e| e.to_string())?;
    let pen = MeanRiskProblem::new(set, cs.clone(), 0.6, 0.5, spec).map_err(|e| e.to_string())?;
    let bounds = ToleranceBounds { roi_min: 1.35, risk_max: 0.07 };
    let con = ConstrainedProblem::new(set, cs, spec, 0.001, bounds).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = [0.0f64; 3];
    for _ in 0..50 {
        let x = random_portfolio(&mut rng, set.n(), 0.05, 1);
        let h_step = 1e-6 * B;
        for (k, p) in [&base as &dyn diversify_core::solver::Problem, &pen, &con].into_iter().enumerate() {
            worst[k] = worst[k].max(check_gradient(p, &x, None, h_step));
        }
    }
    let detail = format!("max rel err baseline {:.1e}, penalty {:.1e}, constrained {:.1e}", worst[0], worst[1], worst[2]);
    if worst.iter().all(|e| *e <= 1e-5) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grid_oracle(h: &mut Harness) -> Verdict {
    let mut grid = Vec::new();
    for i in 0..=100 {
        for j in 0..=(100 - i) {
            grid.push([i as f64, j as f64, (100 - i - j) as f64]);
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for idx in [[0, 1, 2], [3, 4, 5], [0, 3, 5]] {
        let set = h.desk.select_assets(&idx).map_err(|e| e.to_string())?;
        let oracle = Oracle::new(&set, 0.9);
        let table: Vec<Exact> = grid.iter().map(|p| oracle.exact(p)).collect();
        let cs = ConstraintSet::unconstrained(3, B);
        let mut gap = |mine: f64, best: f64, what: String| -> Result<(), String> {
            worst = worst.max(mine - best);
            checks += 1;
            if mine <= best + 1e-4 {
                Ok(())
            } else {
                Err(format!("{idx:?} {what}: {mine} vs grid {best}"))
            }
        };
        for w in [1.0, 0.6, 0.2] {
            let r = solve_baseline(&BaselineRequest::new(w, cs.clone()), &set).map_err(|e| e.to_string())?;
            h.record(format!("grid baseline {idx:?}"), &r.solution.x, Some(r.metrics.hhi));
            let obj = |m: &Exact| -(1.0 - w) * m.roi + w * m.risk;
            let best = table.iter().map(obj).fold(f64::INFINITY, f64::min);
            gap(obj(&oracle.exact(&r.solution.x)), best, format!("baseline w={w}"))?;
        }
        let (w, w_d, theta1) = (0.6, 0.5, 0.1);
        let base = BaselineRequest::new(w, cs.clone());
        let r = solve_hhi_penalty(&PenaltyRequest { base, w_d, theta1: Theta1::Fixed(theta1) }, &set)
            .map_err(|e| e.to_string())?;
        h.record(format!("grid penalty {idx:?}"), &r.solution.x, Some(r.metrics.hhi));
        let obj = |m: &Exact| -(1.0 - w) * m.roi + w * m.risk + w_d * theta1 * m.hhi;
        let best = table.iter().map(obj).fold(f64::INFINITY, f64::min);
        gap(obj(&oracle.exact(&r.solution.x)), best, "penalty".into())?;

        let b = solve_baseline(&BaselineRequest::new(0.6, cs.clone()), &set).map_err(|e| e.to_string())?;
        let req = ConstrainedDivRequest::new(b.solution.x.clone(), b.metrics, 0.05, 0.05, cs.clone());
        let r = solve_hhi_constrained(&req, &set).map_err(|e| e.to_string())?;
        h.record(format!("grid constrained {idx:?}"), &r.solution.x, Some(r.metrics.hhi));
        let (bounds, _) = req.bounds();
        let c = req.w_r * r.theta2;
        let obj = |m: &Exact| m.hhi - c * m.tail;
        let best = table
            .iter()
            .filter(|m| m.roi >= bounds.roi_min && m.risk <= bounds.risk_max)
            .map(obj)
            .fold(f64::INFINITY, f64::min);
        gap(obj(&oracle.exact(&r.solution.x)), best, "constrained".into())?;
    }
    Ok(format!("{checks} solves on 3 sub-instances, worst (solver - grid) = {worst:.2e}"))
}

fn penalty_monotonicity(h: &mut Harness) -> Verdict {
    let doc: Value = serde_json::from_slice(&fs::read(h.artifact("penalty").join("penalty.json")).unwrap()).unwrap();
    let baseline: Frontier = serde_json::from_value(doc["baseline"].clone()).unwrap();
    let mut by_wd = Vec::new();
    for sweep in doc["sweeps"].as_array().unwrap() {
        let f: Frontier = serde_json::from_value(sweep["frontier"].clone()).unwrap();
        by_wd.push((sweep["w_d"].as_f64().unwrap(), f));
    }
    let wds: Vec<f64> = by_wd.iter().map(|(w_d, _)| *w_d).collect();
    if wds != DEFAULT_WD_GRID {
        return Err(format!("w_d grid {wds:?}"));
    }
    for p in &baseline.points {
        h.record("penalty baseline", &p.x, Some(p.hhi));
    }
    let mut halved = Vec::new();
    for w in DEFAULT_W_GRID {
        let mut hhis = Vec::new();
        for (w_d, f) in &by_wd {
            let p = f.points.iter().find(|p| p.w == w).ok_or(format!("missing w={w} w_d={w_d}"))?;
            h.record("penalty", &p.x, Some(p.hhi));
            hhis.push(h.oracle.exact(&p.x).hhi);
        }
        if hhis.windows(2).any(|pair| pair[1] > pair[0] + 1e-9) {
            return Err(format!("w={w}: HHI not non-increasing {hhis:?}"));
        }
        if hhis[0] >= 0.5 {
            if hhis[3] > 0.5 * hhis[0] {
                return Err(format!("w={w}: w_d=0.9 HHI {} > half of {}", hhis[3], hhis[0]));
            }
            halved.push(w);
        }
    }
    Ok(format!("non-increasing for all 5 w; halved at concentrated baselines w={halved:?}"))
}

fn coincidence(h: &mut Harness) -> Verdict {
    let front: Frontier =
        serde_json::from_slice(&fs::read(h.artifact("frontier").join("frontier.json")).unwrap()).unwrap();
    let cs = ConstraintConfig::default().resolve(&h.desk).map_err(|e| e.to_string())?;
    if front.points.len() != DEFAULT_W_GRID.len() {
        return Err(format!("{} baseline points", front.points.len()));
    }
    let mut worst: f64 = 0.0;
    for p in &front.points {
        h.record("frontier", &p.x, Some(p.hhi));
        let req = ConstrainedDivRequest::new(p.x.clone(), p.metrics(), 0.0, 0.0, cs.clone());
        let r = solve_hhi_constrained(&req, &h.desk).map_err(|e| e.to_string())?;
        h.record("coincidence", &r.solution.x, Some(r.metrics.hhi));
        let (a, b) = (h.oracle.exact(&r.solution.x), h.oracle.exact(&p.x));
        let err = (a.roi - b.roi).abs().max((a.risk - b.risk).abs()).max((a.hhi - b.hhi).abs());
        worst = worst.max(err);
        if err > 1e-4 {
            return Err(format!("w={}: max metric gap {err:.2e}", p.w));
        }
    }
    Ok(format!("5 baselines, max metric gap {worst:.2e}"))
}

fn feasible_verification(h: &mut Harness) -> Verdict {
    let suite: SuiteArtifact =
        serde_json::from_slice(&fs::read(h.artifact("suite").join("suite.json")).unwrap()).unwrap();
    if suite.baselines.len() != 5 || suite.pairs.len() != 8 {
        return Err(format!("{} baselines x {} pairs", suite.baselines.len(), suite.pairs.len()));
    }
    for b in &suite.baselines {
        h.record("suite baseline", &b.x, Some(b.metrics.hhi));
    }
    let (mut feasible, mut s1, mut s1_active) = (0, 0, 0);
    for r in &suite.runs {
        h.record("suite", &r.x, Some(r.hhi));
        let m = h.oracle.exact(&r.x);
        let (roi_min, risk_max) = (r.report.roi_bound, r.report.risk_bound);
        if r.feasible {
            feasible += 1;
            if m.roi < roi_min - 1e-6 || m.risk > risk_max + 1e-6 {
                return Err(format!(
                    "w={} {}#{} reported feasible: roi {} (min {roi_min}), risk {} (max {risk_max})",
                    r.w,
                    r.zone.name(),
                    r.index,
                    m.roi,
                    m.risk
                ));
            }
        }
        if r.zone == Zone::S1 {
            s1 += 1;
            let roi_slack = (m.roi - roi_min).abs() / roi_min.abs();
            let risk_slack = (risk_max - m.risk).abs() / risk_max.abs();
            if r.feasible && (roi_slack <= 0.01 || risk_slack <= 0.01) {
                s1_active += 1;
            }
        }
    }
    let share = s1_active as f64 / s1.max(1) as f64;
    let detail = format!(
        "{feasible}/{} feasible, all re-verified; s1 active {s1_active}/{s1} ({:.0}%), {} failures",
        suite.runs.len(),
        100.0 * share,
        suite.failures.len()
    );
    if s1 > 0 && share >= 0.8 && suite.failures.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hhi_bounds(h: &mut Harness) -> Verdict {
    let mut checked = 0;
    for (origin, x, reported) in &h.produced {
        let n = x.len() as f64;
        let exact = h.oracle_hhi(x);
        for v in std::iter::once(exact).chain(*reported) {
            if !(v >= 1.0 / n - 1e-12 && v <= 1.0 + 1e-12) {
                return Err(format!("{origin}: HHI {v} outside [1/{n}, 1]"));
            }
        }
        checked += 1;
    }
    if checked == 0 {
        return Err("no portfolios collected".into());
    }
    Ok(format!("{checked} portfolios within [1/n, 1]"))
}

impl Harness {
    fn oracle_hhi(&self, x: &[f64]) -> f64 {
        let total: f64 = x.iter().sum();
        x.iter().map(|v| (v / total).powi(2)).sum()
    }
}

fn main() {
    let start = Instant::now();
    let desk = generate_synthetic(&GeneratorSpec::default()).expect("desk instance");
    assert_eq!((desk.n(), desk.m()), (6, 100));
    let oracle = Oracle::new(&desk, RiskSpec::default().beta);
    let mut h = Harness {
        desk,
        oracle,
        bin: PathBuf::from(env!("CARGO_BIN_EXE_diversify")),
        root: tempfile::tempdir().expect("tempdir"),
        produced: Vec::new(),
    };

    type Check = fn(&mut Harness) -> Verdict;
    // The CLI runs go first: later criteria read their artifacts.
    let order: [(&str, Check); 9] = [
        ("determinism", determinism),
        ("concentration theorem", concentration),
        ("CVaR oracle equivalence", cvar_oracle),
        ("gradient fidelity", gradients),
        ("grid-oracle dominance", grid_oracle),
        ("penalty monotonicity", penalty_monotonicity),
        ("strategy-2 coincidence", coincidence),
        ("strategy-2 feasible verification", feasible_verification),
        ("HHI bounds", hhi_bounds),
    ];
    let mut results = Vec::new();
    for (name, check) in order {
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(|| check(&mut h)))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        results.push((name, verdict, t.elapsed()));
    }
    let display = [1, 2, 3, 4, 5, 6, 7, 8, 0];
    let mut failed = 0;
    for &i in &display {
        let (name, verdict, took) = &results[i];
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {name}: {detail} [{:.1}s]", took.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
