use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use diversify_core::frontier::{normalize, sweep_w, Frontier, FrontierPoint, NormalizationBounds, SweepTemplate};
use diversify_core::metrics::{self, FrontStats, MetricTriple, Portfolio};
use diversify_core::scenario::{self, generate_synthetic, GeneratorSpec, ScenarioSet, INVESTMENTS_CSV, RETURNS_CSV};
use diversify_core::strategies::{run_perturbation_suite, Baseline, BaselineRequest, PenaltyRequest, Theta1, Zone};
use diversify_server::{AppState, ServerConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::ArtifactDir;
use crate::config::{check_unit_list, parse_counts, parse_list, parse_rect, Config};
use crate::svg::{self, Bar, Series, PALETTE};
use crate::{ConstrainedArgs, DataArgs, EvaluateArgs, FrontierArgs, GenerateArgs, PenaltyArgs, ServeArgs};
use crate::CliError;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn load_set(cfg: &Config, scenarios: Option<&Path>) -> Result<ScenarioSet, CliError> {
    match scenarios {
        Some(p) => scenario::load(p).map_err(|e| CliError::Data(e.to_string())),
        None => generate_synthetic(&cfg.generator).map_err(usage),
    }
}

fn prepare(cfg: &mut Config, data: &DataArgs) -> Result<ScenarioSet, CliError> {
    if let Some(beta) = data.beta {
        cfg.risk.beta = beta;
    }
    cfg.risk.validate().map_err(usage)?;
    load_set(cfg, data.scenarios.as_deref())
}

fn seeds(cfg: &Config, data: &DataArgs) -> Value {
    json!({
        "generator": if data.scenarios.is_none() { Some(cfg.generator.seed) } else { None },
        "solver": cfg.solver.seed,
        "pairs": cfg.suite.rectangle.seed,
    })
}

fn baseline_request(cfg: &Config, set: &ScenarioSet) -> Result<BaselineRequest, CliError> {
    let constraints = cfg.constraints.resolve(set).map_err(usage)?;
    Ok(BaselineRequest { w: 0.0, risk: cfg.risk, constraints, solver: cfg.solver.clone() })
}

fn w_grid(cfg: &mut Config, flag: Option<&str>) -> Result<Vec<f64>, CliError> {
    if let Some(text) = flag {
        cfg.grids.w = parse_list("w", text)?;
    }
    check_unit_list("w", &cfg.grids.w)?;
    Ok(cfg.grids.w.clone())
}

/// Failed or unconverged baseline points, as a message.
fn baseline_problems(front: &Frontier) -> Option<String> {
    let mut issues: Vec<String> = front.failures.iter().map(|f| format!("w={}: {}", f.w, f.error)).collect();
    issues.extend(front.points.iter().filter(|p| !p.converged).map(|p| format!("w={}: not converged", p.w)));
    (!issues.is_empty()).then(|| issues.join("; "))
}

fn xy(bounds: Option<&NormalizationBounds>, p: &FrontierPoint) -> (f64, f64) {
    match bounds {
        Some(b) => {
            let (roi, risk) = b.map(p.roi, p.risk);
            (risk, roi)
        }
        None => (0.5, 0.5),
    }
}

fn series(name: String, color: &str, points: &[FrontierPoint], bounds: Option<&NormalizationBounds>) -> Series {
    Series {
        name,
        color: color.to_string(),
        points: points.iter().map(|p| xy(bounds, p)).collect(),
        hollow: false,
        connect: true,
    }
}

fn bar(name: String, p: &FrontierPoint, highlight: bool) -> Bar {
    Bar { name, shares: p.shares(), highlight }
}

pub fn generate(cfg: Config, args: &GenerateArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) if !path.exists() => {
            return Err(CliError::Usage(format!("generator spec not found: {}", path.display())))
        }
        Some(path) => GeneratorSpec::from_toml_file(path).map_err(usage)?,
        None => cfg.generator.clone(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let set = generate_synthetic(&spec).map_err(usage)?;
    let mut out = ArtifactDir::create(&args.out)?;
    let json = scenario::to_json_string(&set);
    out.write("scenarios.json", "scenario set", json.as_bytes())?;
    scenario::save_csv(&set, &out.path("")).map_err(|e| CliError::Io(e.to_string()))?;
    out.adopt(RETURNS_CSV, "scenario returns")?;
    out.adopt(INVESTMENTS_CSV, "scenario investments")?;
    eprintln!("generated {} assets x {} scenarios in {}", set.n(), set.m(), args.out.display());
    out.finish("generate", &to_value(args), &json!({ "generator": spec.seed }), &json!({ "generator": spec }))
}

pub fn frontier(mut cfg: Config, args: &FrontierArgs) -> Result<(), CliError> {
    let ws = w_grid(&mut cfg, args.w.as_deref())?;
    let set = prepare(&mut cfg, &args.data)?;
    let base = baseline_request(&cfg, &set)?;
    let front = sweep_w(&ws, &SweepTemplate::Baseline(base), &set).map_err(usage)?;
    let labels = set.labels();

    let mut out = ArtifactDir::create(&args.out)?;
    out.write("frontier.json", "baseline frontier", front.to_json().as_bytes())?;
    out.write("frontier.csv", "baseline frontier", front.to_csv(&labels).as_bytes())?;
    let plot = svg::scatter(
        "Baseline frontier",
        "risk (normalized)",
        "ROI (normalized)",
        &[series("baseline".into(), "black", &front.points, front.bounds.as_ref())],
    );
    out.write("frontier.svg", "frontier plot", plot.as_bytes())?;
    let bars: Vec<Bar> = front.points.iter().map(|p| bar(format!("w={}", p.w), p, false)).collect();
    out.write("compositions.svg", "composition plot", svg::stacked_bars("Baseline compositions", &labels, &bars).as_bytes())?;
    out.finish("frontier", &to_value(args), &seeds(&cfg, &args.data), &to_value(&cfg))?;
    match baseline_problems(&front) {
        Some(msg) => Err(CliError::NonConvergence(msg)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct PenaltySweep {
    w_d: f64,
    frontier: Frontier,
}

#[derive(Serialize)]
struct Theta1Value {
    w: f64,
    theta1: f64,
}

#[derive(Serialize)]
struct PenaltyArtifact<'a> {
    front_stats: FrontStats,
    theta1: Vec<Theta1Value>,
    baseline: &'a Frontier,
    sweeps: &'a [PenaltySweep],
}

pub fn penalty(mut cfg: Config, args: &PenaltyArgs) -> Result<(), CliError> {
    let ws = w_grid(&mut cfg, args.w.as_deref())?;
    if let Some(text) = &args.wd {
        cfg.grids.w_d = parse_list("wd", text)?;
    }
    check_unit_list("wd", &cfg.grids.w_d)?;
    let set = prepare(&mut cfg, &args.data)?;
    let base = baseline_request(&cfg, &set)?;
    let baseline = sweep_w(&ws, &SweepTemplate::Baseline(base.clone()), &set).map_err(usage)?;
    if let Some(msg) = baseline_problems(&baseline) {
        return Err(CliError::NonConvergence(msg));
    }
    let triples: Vec<MetricTriple> = baseline.pareto().iter().map(FrontierPoint::metrics).collect();
    let stats = FrontStats::from_triples(&triples)
        .ok_or_else(|| CliError::NonConvergence("baseline frontier is empty".into()))?;
    let theta1 = ws
        .iter()
        .map(|&w| Ok(Theta1Value { w, theta1: metrics::theta1(&stats, w).map_err(usage)? }))
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut sweeps = Vec::new();
    for &w_d in &cfg.grids.w_d {
        let request = PenaltyRequest { base: base.clone(), w_d, theta1: Theta1::Stats(stats) };
        let frontier = sweep_w(&ws, &SweepTemplate::Penalty(request), &set).map_err(usage)?;
        sweeps.push(PenaltySweep { w_d, frontier });
    }
    let all: Vec<FrontierPoint> = sweeps.iter().flat_map(|s| s.frontier.points.iter().cloned()).collect();
    let labels = set.labels();

    let mut out = ArtifactDir::create(&args.out)?;
    let mut text = serde_json::to_string_pretty(&PenaltyArtifact {
        front_stats: stats,
        theta1,
        baseline: &baseline,
        sweeps: &sweeps,
    })
    .expect("serializable");
    text.push('\n');
    out.write("penalty.json", "penalty sweep", text.as_bytes())?;
    out.write("penalty.csv", "penalty compositions", Frontier::new(all.clone()).to_csv(&labels).as_bytes())?;

    let bounds = normalize(&[&baseline.points, &all]);
    let mut lines = vec![series("baseline".into(), "black", &baseline.points, bounds.as_ref())];
    for (k, s) in sweeps.iter().enumerate() {
        lines.push(series(format!("w_d={}", s.w_d), PALETTE[k % PALETTE.len()], &s.frontier.points, bounds.as_ref()));
    }
    let plot = svg::scatter("Frontier comparison", "risk (normalized)", "ROI (normalized)", &lines);
    out.write("frontier_comparison.svg", "frontier comparison plot", plot.as_bytes())?;

    let mut bars = Vec::new();
    for b in &baseline.points {
        bars.push(bar(format!("w={} x*", b.w), b, true));
        for s in &sweeps {
            if let Some(p) = s.frontier.points.iter().find(|p| p.w == b.w) {
                bars.push(bar(format!("w={} wd={}", b.w, s.w_d), p, false));
            }
        }
    }
    out.write("compositions.svg", "composition plot", svg::stacked_bars("Penalty compositions", &labels, &bars).as_bytes())?;
    out.finish("diversify-penalty", &to_value(args), &seeds(&cfg, &args.data), &to_value(&cfg))?;

    let failed: Vec<String> = sweeps
        .iter()
        .flat_map(|s| s.frontier.failures.iter().map(move |f| format!("w={} w_d={}: {}", f.w, s.w_d, f.error)))
        .collect();
    for f in &failed {
        eprintln!("warning: {f}");
    }
    Ok(())
}

pub fn constrained(mut cfg: Config, args: &ConstrainedArgs) -> Result<(), CliError> {
    let ws = w_grid(&mut cfg, args.w.as_deref())?;
    if let Some(text) = &args.rect {
        parse_rect(text, &mut cfg.suite.rectangle)?;
    }
    if let Some(text) = &args.counts {
        cfg.suite.rectangle.counts = parse_counts(text)?;
    }
    if let Some(seed) = args.pair_seed {
        cfg.suite.rectangle.seed = seed;
    }
    if let Some(w_r) = args.wr {
        cfg.suite.w_r = w_r;
    }
    if !(cfg.suite.w_r >= 0.0 && cfg.suite.w_r.is_finite()) {
        return Err(CliError::Usage(format!("--wr must be a non-negative number, got {}", cfg.suite.w_r)));
    }
    cfg.suite.rectangle.validate().map_err(usage)?;
    let set = prepare(&mut cfg, &args.data)?;
    let base = baseline_request(&cfg, &set)?;
    let front = sweep_w(&ws, &SweepTemplate::Baseline(base.clone()), &set).map_err(usage)?;
    if let Some(msg) = baseline_problems(&front) {
        return Err(CliError::NonConvergence(msg));
    }
    let baselines: Vec<Baseline> = front
        .points
        .iter()
        .map(|p| Baseline { w: p.w, x: p.x.clone(), metrics: p.metrics(), converged: p.converged })
        .collect();
    let suite = run_perturbation_suite(
        &baselines,
        &cfg.suite.rectangle,
        cfg.suite.w_r,
        cfg.risk,
        &base.constraints,
        &cfg.solver,
        &set,
    )
    .map_err(usage)?;
    let budget = base.constraints.budget;
    let runs: Vec<FrontierPoint> = suite.runs.iter().map(|r| FrontierPoint::from_suite_run(r, budget)).collect();
    let labels = set.labels();

    let mut out = ArtifactDir::create(&args.out)?;
    out.write_json("suite.json", "perturbation suite", &suite)?;
    let mut table = Frontier::new(front.points.clone());
    table.include(&runs);
    out.write("suite.csv", "suite compositions", table.to_csv(&labels).as_bytes())?;

    let bounds = normalize(&[&front.points, &runs]);
    let mut layers = vec![series("baseline".into(), "black", &front.points, bounds.as_ref())];
    for (k, zone) in Zone::ALL.iter().enumerate() {
        let pts: Vec<FrontierPoint> = suite
            .runs
            .iter()
            .zip(&runs)
            .filter(|(r, _)| r.feasible && r.zone == *zone)
            .map(|(_, p)| p.clone())
            .collect();
        layers.push(Series { connect: false, ..series(zone.name().into(), PALETTE[k], &pts, bounds.as_ref()) });
    }
    let infeasible: Vec<FrontierPoint> =
        suite.runs.iter().zip(&runs).filter(|(r, _)| !r.feasible).map(|(_, p)| p.clone()).collect();
    layers.push(Series {
        hollow: true,
        connect: false,
        ..series("infeasible".into(), "#d62728", &infeasible, bounds.as_ref())
    });
    let plot = svg::scatter("Tolerance suite", "risk (normalized)", "ROI (normalized)", &layers);
    out.write("cloud.svg", "suite cloud plot", plot.as_bytes())?;

    let mut bars = Vec::new();
    for b in &front.points {
        bars.push(bar(format!("w={} x*", b.w), b, true));
        for (r, p) in suite.runs.iter().zip(&runs) {
            if r.w == b.w && r.feasible {
                bars.push(bar(format!("w={} {}#{}", r.w, r.zone.name(), r.index), p, false));
            }
        }
    }
    out.write("compositions.svg", "composition plot", svg::stacked_bars("Suite compositions", &labels, &bars).as_bytes())?;
    out.finish("diversify-constrained", &to_value(args), &seeds(&cfg, &args.data), &to_value(&cfg))?;

    let feasible = suite.runs.iter().filter(|r| r.feasible).count();
    eprintln!(
        "{} runs: {feasible} feasible, {} infeasible, {} failed",
        suite.runs.len() + suite.failures.len(),
        suite.runs.len() - feasible,
        suite.failures.len()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PortfolioFile {
    Full {
        x: Vec<f64>,
        #[serde(default)]
        budget: Option<f64>,
    },
    Bare(Vec<f64>),
}

#[derive(Serialize)]
struct Evaluation {
    x: Vec<f64>,
    budget: f64,
    metrics: MetricTriple,
}

pub fn evaluate(mut cfg: Config, args: &EvaluateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.portfolio)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.portfolio.display())))?;
    let parsed: PortfolioFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("cannot parse {}: {e}", args.portfolio.display())))?;
    let (x, budget) = match parsed {
        PortfolioFile::Full { x, budget } => (x, budget.unwrap_or(cfg.constraints.budget)),
        PortfolioFile::Bare(x) => (x, cfg.constraints.budget),
    };
    let set = prepare(&mut cfg, &args.data)?;
    if x.len() != set.n() {
        return Err(CliError::Usage(format!("portfolio has {} entries but the universe has {} assets", x.len(), set.n())));
    }
    let portfolio = Portfolio::new(x, budget).map_err(usage)?;
    let m = metrics::evaluate_portfolio(&portfolio, &set, &cfg.risk).map_err(usage)?;
    let result = Evaluation { x: portfolio.quantities().to_vec(), budget, metrics: m };
    println!("{}", serde_json::to_string_pretty(&m).expect("serializable"));
    if let Some(dir) = &args.out {
        let mut out = ArtifactDir::create(dir)?;
        out.write_json("evaluate.json", "portfolio metrics", &result)?;
        out.finish("evaluate", &to_value(args), &seeds(&cfg, &args.data), &to_value(&cfg))?;
    }
    Ok(())
}

pub fn serve(cfg: Config, args: &ServeArgs) -> Result<(), CliError> {
    if !(args.time_budget > 0.0 && args.time_budget.is_finite()) {
        return Err(CliError::Usage(format!("--time-budget must be positive, got {}", args.time_budget)));
    }
    let addr: SocketAddr = args.addr.parse().map_err(|e| CliError::Usage(format!("--addr `{}`: {e}", args.addr)))?;
    cfg.risk.validate().map_err(usage)?;
    let config = ServerConfig {
        constraints: cfg.constraints.clone(),
        risk: cfg.risk,
        solver: cfg.solver.clone(),
        w_grid: cfg.grids.w.clone(),
        w_r: cfg.suite.w_r,
        time_budget: Duration::from_secs_f64(args.time_budget),
    };
    let state = if args.scenarios.is_some() || args.generate {
        let set = load_set(&cfg, args.scenarios.as_deref())?;
        AppState::with_dataset(config, set).map_err(usage)?
    } else {
        AppState::new(config)
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(diversify_server::serve(addr, Arc::new(state)))
        .map_err(|e| CliError::Io(format!("server on {addr}: {e}")))
}
