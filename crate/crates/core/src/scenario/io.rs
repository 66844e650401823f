//! Scenario file formats.
//!
//! JSON is canonical: `{"assets": [...], "returns": [[...]], "investments": [[...]]}`.
//! The CSV form is a directory holding `returns.csv` and `investments.csv`,
//! each with a header row of asset labels and one row per scenario. CSV does
//! not carry asset metadata, so CAPEX per unit is recovered as the column mean
//! of the investments and production caps are left unbounded.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_label, Asset, ScenarioError, ScenarioSet};

pub const RETURNS_CSV: &str = "returns.csv";
pub const INVESTMENTS_CSV: &str = "investments.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub assets: Vec<Asset>,
    pub returns: Vec<Vec<f64>>,
    pub investments: Vec<Vec<f64>>,
}

impl From<&ScenarioSet> for ScenarioDocument {
    fn from(set: &ScenarioSet) -> Self {
        Self {
            assets: set.assets().to_vec(),
            returns: set.returns_matrix(),
            investments: set.investments_matrix(),
        }
    }
}

impl TryFrom<ScenarioDocument> for ScenarioSet {
    type Error = ScenarioError;

    fn try_from(doc: ScenarioDocument) -> Result<Self, Self::Error> {
        ScenarioSet::new(doc.assets, doc.returns, doc.investments)
    }
}

/// Loads a `.json` file, or a directory in the CSV layout.
pub fn load(path: &Path) -> Result<ScenarioSet, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.display().to_string()));
    }
    if path.is_dir() {
        load_csv(&path.join(RETURNS_CSV), &path.join(INVESTMENTS_CSV))
    } else {
        load_json(path)
    }
}

/// Saves JSON when `path` ends in `.json`, otherwise a CSV directory.
pub fn save(set: &ScenarioSet, path: &Path) -> Result<(), ScenarioError> {
    if path.extension().is_some_and(|e| e == "json") {
        save_json(set, path)
    } else {
        save_csv(set, path)
    }
}

pub fn load_json(path: &Path) -> Result<ScenarioSet, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    let doc: ScenarioDocument = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    doc.try_into()
}

pub fn to_json_string(set: &ScenarioSet) -> String {
    let mut text = serde_json::to_string_pretty(&ScenarioDocument::from(set)).expect("serializable");
    text.push('\n');
    text
}

pub fn save_json(set: &ScenarioSet, path: &Path) -> Result<(), ScenarioError> {
    fs::write(path, to_json_string(set))?;
    Ok(())
}

pub fn save_csv(set: &ScenarioSet, dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)?;
    let labels = set.labels();
    for (name, rows) in [(RETURNS_CSV, set.returns_matrix()), (INVESTMENTS_CSV, set.investments_matrix())] {
        let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err(&dir.join(name)))?;
        w.write_record(&labels).map_err(csv_err(&dir.join(name)))?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err(&dir.join(name)))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ScenarioError + '_ {
    move |e| ScenarioError::Parse { path: path.display().to_string(), reason: e.to_string() }
}

fn read_matrix(path: &Path, matrix: &'static str) -> Result<(Vec<String>, Vec<Vec<f64>>), ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.display().to_string()));
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(|h| h.trim().to_string()).collect();
    let n = header.len();
    let mut rows = Vec::new();
    for (s, record) in r.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != n {
            return Err(ScenarioError::Dimension {
                matrix,
                reason: format!("row {s} has {} entries, expected {n}", record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                cell.trim().parse::<f64>().map_err(|_| ScenarioError::Parse {
                    path: path.display().to_string(),
                    reason: format!("bad number `{cell}` at ({s},{i})"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn load_csv(returns_path: &Path, investments_path: &Path) -> Result<ScenarioSet, ScenarioError> {
    let (labels, returns) = read_matrix(returns_path, "returns")?;
    let (inv_labels, investments) = read_matrix(investments_path, "investments")?;
    if labels != inv_labels {
        return Err(ScenarioError::Dimension {
            matrix: "investments",
            reason: "header differs from the returns header".into(),
        });
    }
    // Check positivity here so the error points at the scenario cell even
    // before the mean-CAPEX recovery below divides by it.
    for (s, row) in investments.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if v <= 0.0 {
                return Err(ScenarioError::NonPositiveInvestment { scenario: s, asset: i, value: v });
            }
        }
    }
    let m = investments.len().max(1) as f64;
    let assets = labels
        .iter()
        .enumerate()
        .map(|(id, label)| {
            let (technology, country, category) = parse_label(label)?;
            let capex = investments.iter().map(|row| row[id]).sum::<f64>() / m;
            Ok(Asset {
                id,
                technology,
                country,
                category,
                max_production: None,
                capex_per_unit: if capex > 0.0 { capex } else { 1.0 },
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    ScenarioSet::new(assets, returns, investments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, GeneratorSpec};

    fn small() -> ScenarioSet {
        generate_synthetic(&GeneratorSpec { scenarios: 12, ..Default::default() }).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let set = small();
        let path = dir.path().join("s.json");
        save(&set, &path).unwrap();
        assert_eq!(load(&path).unwrap(), set);
    }

    #[test]
    fn csv_round_trip_keeps_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let set = small();
        let path = dir.path().join("csv");
        save(&set, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.returns_matrix(), set.returns_matrix());
        assert_eq!(back.investments_matrix(), set.investments_matrix());
        assert_eq!(back.labels(), set.labels());
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load(Path::new("/nonexistent/scenarios.json")).unwrap_err();
        assert!(matches!(err, ScenarioError::MissingFile(_)));
    }

    #[test]
    fn zero_investment_in_csv_is_located() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RETURNS_CSV), "T1_C1_Secured,T1_C2_Merchant\n1,2\n3,4\n").unwrap();
        fs::write(dir.path().join(INVESTMENTS_CSV), "T1_C1_Secured,T1_C2_Merchant\n1,2\n1,0\n").unwrap();
        let err = load(dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "non-positive investment at (1,1): 0");
    }

    #[test]
    fn short_csv_row_is_a_dimension_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RETURNS_CSV), "T1_C1_Secured,T1_C2_Merchant\n1,2\n3\n").unwrap();
        fs::write(dir.path().join(INVESTMENTS_CSV), "T1_C1_Secured,T1_C2_Merchant\n1,2\n1,1\n").unwrap();
        let err = load(dir.path()).unwrap_err();
        assert!(matches!(err, ScenarioError::Dimension { matrix: "returns", .. }), "{err}");
    }

    #[test]
    fn json_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut doc = ScenarioDocument::from(&small());
        doc.investments[3].push(1.0);
        let path = dir.path().join("bad.json");
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(matches!(load(&path).unwrap_err(), ScenarioError::Dimension { matrix: "investments", .. }));
    }
}
