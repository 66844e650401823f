//! Asset universe and scenario data.
//!
//! A [`ScenarioSet`] holds `m` equiprobable realizations of the per-unit
//! return `R` and per-unit investment `I` of every asset. Both are expressed
//! in currency per production unit, so `x·R` and `x·I` are currencies for a
//! production vector `x`.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod io;

pub use io::{
    load, load_csv, load_json, save, save_csv, save_json, to_json_string, ScenarioDocument, INVESTMENTS_CSV, RETURNS_CSV,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid generator spec: field `{field}` {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid asset {id}: {reason}")]
    InvalidAsset { id: usize, reason: String },
    #[error("duplicate asset {label}")]
    DuplicateAsset { label: String },
    #[error("{matrix} matrix: {reason}")]
    Dimension { matrix: &'static str, reason: String },
    #[error("non-positive investment at ({scenario},{asset}): {value}")]
    NonPositiveInvestment { scenario: usize, asset: usize, value: f64 },
    #[error("non-finite {matrix} entry at ({scenario},{asset})")]
    NonFinite { matrix: &'static str, scenario: usize, asset: usize },
    #[error("scenario file not found: {0}")]
    MissingFile(String),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("bad asset label `{0}`, expected T{{t}}_C{{c}}_{{Secured|Merchant}}")]
    BadLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Secured,
    Merchant,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Secured => f.write_str("Secured"),
            Category::Merchant => f.write_str("Merchant"),
        }
    }
}

/// A unique (technology, country) combination in one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub id: usize,
    pub technology: u32,
    pub country: u32,
    pub category: Category,
    /// Production cap in production units; `None` is unbounded.
    #[serde(default)]
    pub max_production: Option<f64>,
    pub capex_per_unit: f64,
}

impl Asset {
    pub fn label(&self) -> String {
        asset_label(self)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |reason: &str| ScenarioError::InvalidAsset {
            id: self.id,
            reason: reason.to_string(),
        };
        if self.technology < 1 || self.country < 1 {
            return Err(bad("technology and country indices start at 1"));
        }
        if let Some(cap) = self.max_production {
            if !(cap >= 0.0) {
                return Err(bad("max_production must be >= 0"));
            }
        }
        if !(self.capex_per_unit > 0.0 && self.capex_per_unit.is_finite()) {
            return Err(bad("capex_per_unit must be positive"));
        }
        Ok(())
    }
}

/// Renders `T{t}_C{c}_{Category}`.
pub fn asset_label(asset: &Asset) -> String {
    format!("T{}_C{}_{}", asset.technology, asset.country, asset.category)
}

/// Inverse of [`asset_label`]: `(technology, country, category)`.
pub fn parse_label(label: &str) -> Result<(u32, u32, Category), ScenarioError> {
    let bad = || ScenarioError::BadLabel(label.to_string());
    let mut parts = label.trim().split('_');
    let t = parts.next().and_then(|p| p.strip_prefix('T')).ok_or_else(bad)?;
    let c = parts.next().and_then(|p| p.strip_prefix('C')).ok_or_else(bad)?;
    let cat = match parts.next() {
        Some("Secured") => Category::Secured,
        Some("Merchant") => Category::Merchant,
        _ => return Err(bad()),
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    let t: u32 = t.parse().map_err(|_| bad())?;
    let c: u32 = c.parse().map_err(|_| bad())?;
    if t == 0 || c == 0 {
        return Err(bad());
    }
    Ok((t, c, cat))
}

/// Scenario matrices stored row-major: entry `(s, i)` lives at `s * n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    assets: Vec<Asset>,
    returns: Vec<f64>,
    investments: Vec<f64>,
    m: usize,
}

impl ScenarioSet {
    pub fn new(
        assets: Vec<Asset>,
        returns: Vec<Vec<f64>>,
        investments: Vec<Vec<f64>>,
    ) -> Result<Self, ScenarioError> {
        let n = assets.len();
        if n == 0 {
            return Err(ScenarioError::Dimension {
                matrix: "asset",
                reason: "empty asset list".into(),
            });
        }
        for a in &assets {
            a.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &assets {
            if !seen.insert((a.technology, a.country, a.category)) {
                return Err(ScenarioError::DuplicateAsset { label: a.label() });
            }
        }
        let m = returns.len();
        if m == 0 {
            return Err(ScenarioError::Dimension {
                matrix: "returns",
                reason: "no scenarios".into(),
            });
        }
        if investments.len() != m {
            return Err(ScenarioError::Dimension {
                matrix: "investments",
                reason: format!("{} rows, returns has {m}", investments.len()),
            });
        }
        let flatten = |rows: Vec<Vec<f64>>, matrix: &'static str| -> Result<Vec<f64>, ScenarioError> {
            let mut flat = Vec::with_capacity(m * n);
            for (s, row) in rows.into_iter().enumerate() {
                if row.len() != n {
                    return Err(ScenarioError::Dimension {
                        matrix,
                        reason: format!("row {s} has {} entries, expected {n}", row.len()),
                    });
                }
                for (i, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ScenarioError::NonFinite { matrix, scenario: s, asset: i });
                    }
                }
                flat.extend(row);
            }
            Ok(flat)
        };
        let returns = flatten(returns, "returns")?;
        let investments = flatten(investments, "investments")?;
        for (k, &v) in investments.iter().enumerate() {
            if v <= 0.0 {
                return Err(ScenarioError::NonPositiveInvestment {
                    scenario: k / n,
                    asset: k % n,
                    value: v,
                });
            }
        }
        Ok(Self { assets, returns, investments, m })
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn labels(&self) -> Vec<String> {
        self.assets.iter().map(Asset::label).collect()
    }

    /// Number of assets.
    pub fn n(&self) -> usize {
        self.assets.len()
    }

    /// Number of scenarios.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn returns_row(&self, s: usize) -> &[f64] {
        let n = self.n();
        &self.returns[s * n..(s + 1) * n]
    }

    pub fn investments_row(&self, s: usize) -> &[f64] {
        let n = self.n();
        &self.investments[s * n..(s + 1) * n]
    }

    pub fn returns(&self, s: usize, i: usize) -> f64 {
        self.returns[s * self.n() + i]
    }

    pub fn investment(&self, s: usize, i: usize) -> f64 {
        self.investments[s * self.n() + i]
    }

    pub fn returns_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|s| self.returns_row(s).to_vec()).collect()
    }

    pub fn investments_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.m).map(|s| self.investments_row(s).to_vec()).collect()
    }

    /// Scenario-mean of `R_i / I_i` for asset `i`.
    pub fn mean_ratio(&self, i: usize) -> f64 {
        (0..self.m).map(|s| self.returns(s, i) / self.investment(s, i)).sum::<f64>() / self.m as f64
    }

    pub fn mean_investment(&self, i: usize) -> f64 {
        (0..self.m).map(|s| self.investment(s, i)).sum::<f64>() / self.m as f64
    }

    pub fn max_investment(&self, i: usize) -> f64 {
        (0..self.m).map(|s| self.investment(s, i)).fold(f64::MIN, f64::max)
    }

    /// Smallest and largest single-asset ratio `R/I` over all scenarios.
    ///
    /// Every per-scenario portfolio ROI is a weighted mediant of these
    /// ratios, so it always lies inside this interval.
    pub fn ratio_range(&self) -> (f64, f64) {
        self.returns
            .iter()
            .zip(&self.investments)
            .map(|(r, i)| r / i)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Restricts the universe to `indices`, keeping every scenario.
    pub fn select_assets(&self, indices: &[usize]) -> Result<Self, ScenarioError> {
        let assets: Vec<Asset> = indices
            .iter()
            .enumerate()
            .map(|(new_id, &i)| {
                let mut a = self.assets[i].clone();
                a.id = new_id;
                a
            })
            .collect();
        let pick = |row: &[f64]| indices.iter().map(|&i| row[i]).collect::<Vec<_>>();
        let returns = (0..self.m).map(|s| pick(self.returns_row(s))).collect();
        let investments = (0..self.m).map(|s| pick(self.investments_row(s))).collect();
        Self::new(assets, returns, investments)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        load(path)
    }
}

/// How categories are assigned over the technology × country grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CategoryRule {
    /// Checkerboard: Secured when `t + c` is even.
    #[default]
    Alternating,
    AllSecured,
    AllMerchant,
    /// One asset of each category per (t, c) pair.
    Both,
}

/// Relative (log-scale) standard deviations of the scenario draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub returns: f64,
    pub investments: f64,
}

impl Dispersion {
    fn ratio_sigma(&self) -> f64 {
        self.returns.hypot(self.investments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_technologies: u32,
    pub n_countries: u32,
    pub category_rule: CategoryRule,
    pub scenarios: usize,
    pub secured: Dispersion,
    pub merchant: Dispersion,
    /// Interval from which each asset's target mean ROI is drawn.
    pub roi_band: [f64; 2],
    /// Interval from which each asset's CAPEX per unit is drawn.
    pub capex_band: [f64; 2],
    pub max_production: Option<f64>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_technologies: 3,
            n_countries: 2,
            category_rule: CategoryRule::Alternating,
            scenarios: 100,
            secured: Dispersion { returns: 0.04, investments: 0.02 },
            merchant: Dispersion { returns: 0.30, investments: 0.08 },
            roi_band: [1.15, 1.45],
            capex_band: [800.0, 1600.0],
            max_production: None,
            seed: 42,
        }
    }
}

impl GeneratorSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: "<generator spec>".into(),
            reason: e.to_string(),
        })
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ScenarioError> {
        if !path.exists() {
            return Err(ScenarioError::MissingFile(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |field: &'static str, reason: &str| {
            Err(ScenarioError::InvalidSpec { field, reason: reason.to_string() })
        };
        if self.n_technologies == 0 {
            return bad("n_technologies", "must be at least 1 (zero assets)");
        }
        if self.n_countries == 0 {
            return bad("n_countries", "must be at least 1 (zero assets)");
        }
        if self.scenarios == 0 {
            return bad("scenarios", "must be at least 1");
        }
        for (field, d) in [("secured", &self.secured), ("merchant", &self.merchant)] {
            if !(d.returns >= 0.0 && d.investments >= 0.0) || !d.returns.is_finite() || !d.investments.is_finite() {
                return bad(field, "dispersions must be finite and >= 0");
            }
        }
        let uses_both = matches!(self.category_rule, CategoryRule::Alternating | CategoryRule::Both);
        if uses_both && self.secured.ratio_sigma() >= self.merchant.ratio_sigma() {
            return bad("secured", "dispersion must be below the merchant dispersion");
        }
        let [lo, hi] = self.roi_band;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("roi_band", "must be a positive interval [lo, hi]");
        }
        let [lo, hi] = self.capex_band;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("capex_band", "must be a positive interval [lo, hi]");
        }
        if let Some(cap) = self.max_production {
            if !(cap >= 0.0) {
                return bad("max_production", "must be >= 0");
            }
        }
        Ok(())
    }

    fn assets(&self) -> Vec<(u32, u32, Category)> {
        let mut out = Vec::new();
        for t in 1..=self.n_technologies {
            for c in 1..=self.n_countries {
                match self.category_rule {
                    CategoryRule::Alternating => {
                        let cat = if (t + c) % 2 == 0 { Category::Secured } else { Category::Merchant };
                        out.push((t, c, cat));
                    }
                    CategoryRule::AllSecured => out.push((t, c, Category::Secured)),
                    CategoryRule::AllMerchant => out.push((t, c, Category::Merchant)),
                    CategoryRule::Both => {
                        out.push((t, c, Category::Secured));
                        out.push((t, c, Category::Merchant));
                    }
                }
            }
        }
        out
    }
}

/// Draws a synthetic scenario set.
///
/// Per asset, `I = capex · exp(e_I)` and `R = roi · capex · exp(e_R)` with
/// zero-mean Gaussian log-noise whose scale depends on the category. The
/// target ROI and CAPEX are drawn once per asset.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<ScenarioSet, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = spec.assets();
    let mut assets = Vec::with_capacity(grid.len());
    let mut targets = Vec::with_capacity(grid.len());
    for (id, (t, c, category)) in grid.into_iter().enumerate() {
        let capex = uniform(&mut rng, spec.capex_band);
        let roi = uniform(&mut rng, spec.roi_band);
        assets.push(Asset {
            id,
            technology: t,
            country: c,
            category,
            max_production: spec.max_production,
            capex_per_unit: capex,
        });
        targets.push(roi);
    }
    let n = assets.len();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut returns = Vec::with_capacity(spec.scenarios);
    let mut investments = Vec::with_capacity(spec.scenarios);
    for _ in 0..spec.scenarios {
        let mut r_row = Vec::with_capacity(n);
        let mut i_row = Vec::with_capacity(n);
        for (a, &roi) in assets.iter().zip(&targets) {
            let d = match a.category {
                Category::Secured => spec.secured,
                Category::Merchant => spec.merchant,
            };
            let e_r: f64 = std_normal.sample(&mut rng);
            let e_i: f64 = std_normal.sample(&mut rng);
            i_row.push(a.capex_per_unit * (d.investments * e_i).exp());
            r_row.push(roi * a.capex_per_unit * (d.returns * e_r).exp());
        }
        returns.push(r_row);
        investments.push(i_row);
    }
    ScenarioSet::new(assets, returns, investments)
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(values: &[f64]) -> f64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
        var.sqrt() / mean
    }

    #[test]
    fn labels_follow_format() {
        let a = Asset {
            id: 0,
            technology: 1,
            country: 2,
            category: Category::Secured,
            max_production: None,
            capex_per_unit: 1.0,
        };
        assert_eq!(asset_label(&a), "T1_C2_Secured");
        let b = Asset { technology: 3, country: 1, category: Category::Merchant, ..a.clone() };
        assert_eq!(b.label(), "T3_C1_Merchant");
        assert_ne!(a.label(), b.label());
        assert_eq!(parse_label("T3_C1_Merchant").unwrap(), (3, 1, Category::Merchant));
        assert!(parse_label("T0_C1_Merchant").is_err());
        assert!(parse_label("T1_C1_Other").is_err());
    }

    #[test]
    fn default_spec_is_desk_scale() {
        let set = generate_synthetic(&GeneratorSpec::default()).unwrap();
        assert_eq!(set.n(), 6);
        assert_eq!(set.m(), 100);
        let secured = set.assets().iter().filter(|a| a.category == Category::Secured).count();
        assert_eq!(secured, 3);
        let labels: std::collections::BTreeSet<_> = set.labels().into_iter().collect();
        assert_eq!(labels.len(), 6);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&GeneratorSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_secured_dispersion_gives_constant_columns() {
        let spec = GeneratorSpec {
            secured: Dispersion { returns: 0.0, investments: 0.0 },
            ..GeneratorSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        for (i, a) in set.assets().iter().enumerate() {
            if a.category != Category::Secured {
                continue;
            }
            for s in 1..set.m() {
                assert_eq!(set.returns(s, i), set.returns(0, i));
                assert_eq!(set.investment(s, i), set.investment(0, i));
            }
        }
    }

    #[test]
    fn merchant_ratios_are_more_dispersed() {
        let set = generate_synthetic(&GeneratorSpec::default()).unwrap();
        for t in 1..=3 {
            let cv_of = |cat| {
                let i = set
                    .assets()
                    .iter()
                    .position(|a| a.technology == t && a.category == cat)
                    .unwrap();
                let ratios: Vec<f64> = (0..set.m()).map(|s| set.returns(s, i) / set.investment(s, i)).collect();
                cv(&ratios)
            };
            assert!(cv_of(Category::Merchant) > cv_of(Category::Secured), "technology {t}");
        }
    }

    #[test]
    fn validation_names_the_field() {
        let cases = [
            (GeneratorSpec { n_technologies: 0, ..Default::default() }, "n_technologies"),
            (GeneratorSpec { scenarios: 0, ..Default::default() }, "scenarios"),
            (
                GeneratorSpec {
                    merchant: Dispersion { returns: -0.1, investments: 0.1 },
                    ..Default::default()
                },
                "merchant",
            ),
            (
                GeneratorSpec {
                    secured: Dispersion { returns: 0.5, investments: 0.5 },
                    ..Default::default()
                },
                "secured",
            ),
        ];
        for (spec, field) in cases {
            match generate_synthetic(&spec) {
                Err(ScenarioError::InvalidSpec { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected InvalidSpec({field}), got {other:?}"),
            }
        }
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec = GeneratorSpec::from_toml_str(
            "n_technologies = 2\nscenarios = 10\nseed = 9\n[merchant]\nreturns = 0.5\ninvestments = 0.1\n",
        )
        .unwrap();
        assert_eq!(spec.n_technologies, 2);
        assert_eq!(spec.n_countries, 2);
        assert_eq!(spec.merchant.returns, 0.5);
        assert!(GeneratorSpec::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn both_rule_pairs_categories() {
        let spec = GeneratorSpec { category_rule: CategoryRule::Both, ..Default::default() };
        let set = generate_synthetic(&spec).unwrap();
        assert_eq!(set.n(), 12);
    }

    #[test]
    fn select_assets_reindexes() {
        let set = generate_synthetic(&GeneratorSpec::default()).unwrap();
        let sub = set.select_assets(&[4, 1]).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.assets()[0].id, 0);
        assert_eq!(sub.returns(7, 0), set.returns(7, 4));
        assert_eq!(sub.investment(7, 1), set.investment(7, 1));
    }

    #[test]
    fn new_rejects_bad_matrices() {
        let set = generate_synthetic(&GeneratorSpec { scenarios: 3, ..Default::default() }).unwrap();
        let assets = set.assets().to_vec();
        let mut inv = set.investments_matrix();
        inv[2][4] = 0.0;
        match ScenarioSet::new(assets.clone(), set.returns_matrix(), inv) {
            Err(ScenarioError::NonPositiveInvestment { scenario: 2, asset: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut ret = set.returns_matrix();
        ret[1].pop();
        assert!(matches!(
            ScenarioSet::new(assets, ret, set.investments_matrix()),
            Err(ScenarioError::Dimension { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn investments_always_positive(seed in 0u64..500, m in 1usize..40) {
            let spec = GeneratorSpec { seed, scenarios: m, ..Default::default() };
            let set = generate_synthetic(&spec).unwrap();
            for s in 0..set.m() {
                for &v in set.investments_row(s) {
                    proptest::prop_assert!(v > 0.0);
                }
            }
        }
    }
}
