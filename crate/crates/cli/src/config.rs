use std::path::Path;

use diversify_core::metrics::RiskSpec;
use diversify_core::scenario::GeneratorSpec;
use diversify_core::solver::{ConstraintConfig, SolverConfig};
use diversify_core::strategies::{ToleranceRectangle, DEFAULT_WD_GRID, DEFAULT_W_GRID, DEFAULT_W_R};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Run configuration; every section is optional in the TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub generator: GeneratorSpec,
    pub constraints: ConstraintConfig,
    pub risk: RiskSpec,
    pub solver: SolverConfig,
    pub grids: Grids,
    pub suite: Suite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub w: Vec<f64>,
    pub w_d: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self { w: DEFAULT_W_GRID.to_vec(), w_d: DEFAULT_WD_GRID.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suite {
    pub rectangle: ToleranceRectangle,
    pub w_r: f64,
}

impl Default for Suite {
    fn default() -> Self {
        Self { rectangle: ToleranceRectangle::default(), w_r: DEFAULT_W_R }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Comma-separated numbers; empty input is a usage error.
pub fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Usage(format!("--{flag} needs at least one value")));
    }
    items
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("--{flag}: `{s}` is not a number"))))
        .collect()
}

pub fn check_unit_list(flag: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Usage(format!("--{flag} needs at least one value")));
    }
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(CliError::Usage(format!("--{flag} values must lie in [0, 1], got {v}"))),
        None => Ok(()),
    }
}

/// `a=0.1,b=0.1`
pub fn parse_rect(text: &str, rect: &mut ToleranceRectangle) -> Result<(), CliError> {
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) =
            part.split_once('=').ok_or_else(|| CliError::Usage(format!("--rect: expected key=value, got `{part}`")))?;
        let v: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("--rect: bad number `{value}`")))?;
        match key.trim() {
            "a" => rect.a = v,
            "b" => rect.b = v,
            other => return Err(CliError::Usage(format!("--rect: unknown key `{other}`"))),
        }
    }
    Ok(())
}

/// `4,2,2`
pub fn parse_counts(text: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--counts expects three non-negative integers, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_rectangles() {
        assert_eq!(parse_list("w", "1, 0.8,0.6").unwrap(), vec![1.0, 0.8, 0.6]);
        assert!(parse_list("w", "").is_err());
        assert!(parse_list("w", "1,x").is_err());
        let mut rect = ToleranceRectangle::default();
        parse_rect("a=0.2,b=0.05", &mut rect).unwrap();
        assert_eq!((rect.a, rect.b), (0.2, 0.05));
        assert!(parse_rect("c=1", &mut rect).is_err());
        assert_eq!(parse_counts("0,0,0").unwrap(), [0, 0, 0]);
        assert!(parse_counts("1,2").is_err());
        assert!(check_unit_list("wd", &[0.0, 1.2]).is_err());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: Config = toml::from_str("[risk]\nbeta = 0.95\n[grids]\nw = [0.5]\n").unwrap();
        assert_eq!(cfg.risk.beta, 0.95);
        assert_eq!(cfg.grids.w, vec![0.5]);
        assert_eq!(cfg.grids.w_d, DEFAULT_WD_GRID.to_vec());
        assert_eq!(cfg.solver, SolverConfig::default());
        assert!(toml::from_str::<Config>("[risk]\nbogus = 1\n").is_err());
    }
}
