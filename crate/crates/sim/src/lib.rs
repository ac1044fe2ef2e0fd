//! Scenario simulator and operator tooling for the event recommender.

pub mod fixtures;
pub mod scenario;

use std::path::{Path, PathBuf};

use crs_core::catalog::Catalog;
use crs_core::resque::{validate_response, SurveyResponse};
use crs_core::telemetry::{aggregate, JsonlStore, MetricsReport, ReportFilter};
use crs_core::PathFit;

pub use scenario::{run_all, run_scenario, ProviderChoice, Scenario, ScenarioError, ScenarioReport};

pub fn load_catalog(path: &Path) -> Result<Catalog, String> {
    crs_server::load_catalog(path).map_err(|e| e.to_string())
}

/// Scenarios shipped with the crate.
pub fn bundled_scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// All `*.toml` scenarios in `dir`, sorted by file name.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let err = |e: std::io::Error| ScenarioError::Load { path: dir.to_path_buf(), message: e.to_string() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p)).collect()
}

/// Aggregate a JSON Lines metric store directory.
pub fn run_report(store: &Path, filter: &ReportFilter) -> Result<MetricsReport, String> {
    if !store.is_dir() {
        return Err(format!("{}: not a metric store directory", store.display()));
    }
    let records = JsonlStore::read_dir(store).map_err(|e| format!("{}: {e}", store.display()))?;
    Ok(aggregate(&records, filter))
}

/// Survey responses from JSON Lines or a JSON array, each validated.
pub fn read_responses(path: &Path) -> Result<Vec<SurveyResponse>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let raws: Vec<serde_json::Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
            .collect::<Result<_, _>>()?
    };
    raws.iter()
        .enumerate()
        .map(|(i, raw)| validate_response(raw).map_err(|e| format!("{} response {}: {e}", path.display(), i + 1)))
        .collect()
}

/// Aligned text rendering of a path estimate.
pub fn path_table(fit: &PathFit) -> String {
    let mut rows = vec![[
        "Independent variable".to_string(),
        "Dependent variable".into(),
        "B".into(),
        "β".into(),
        "SE".into(),
        "p".into(),
    ]];
    for e in &fit.edges {
        rows.push([
            e.predictor.label(),
            e.dependent.label(),
            format!("{:.3}", e.b),
            format!("{:.3}", e.beta),
            format!("{:.3}", e.se),
            if e.p < 0.001 { "<.001".into() } else { format!("{:.3}", e.p) },
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for eq in &fit.equations {
        out.push_str(&format!("R² {}: {:.3}\n", eq.dependent.label(), eq.r_squared));
    }
    out.push_str(&format!("n = {}\n", fit.n));
    out
}
