//! Scripted sessions replayed through the engine, with partial expectations
//! checked per step.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crs_core::catalog::TimeWindow;
use crs_core::clock::{Clock, SimulatedClock, SystemClock};
use crs_core::dialog::{ActionKind, Engine, UserInputEvent};
use crs_core::gateway::{Gateway, HttpProvider, HttpProviderConfig, MockProvider, Provider, Stage};
use crs_core::inquiry::StaticFetcher;
use crs_core::telemetry::{
    aggregate, classify_failures, export_logs, FailureCategory, FailureTag, LogFormat, MemoryStore, MetricStore,
    MetricsReport, ReportFilter, TurnLog, TurnOutcome,
};
use crs_core::UsdRate;

use crate::load_catalog;

/// Fields checked after a step. Unset fields are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectation {
    pub action: Option<ActionKind>,
    pub outcome: Option<TurnOutcome>,
    pub slate_ids: Option<Vec<String>>,
    /// Slate ids in any order.
    pub slate_members: Option<Vec<String>>,
    /// Active window after the step.
    pub window: Option<TimeWindow>,
    pub text_contains: Option<String>,
    pub text_excludes: Option<String>,
    /// Number of model calls per stage during the step.
    pub stage_calls: Option<BTreeMap<Stage, usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub input: UserInputEvent,
    #[serde(default)]
    pub expect: Expectation,
}

/// A page served to targeted inquiries instead of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub url: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub catalog: PathBuf,
    pub mock_script: Option<PathBuf>,
    /// Start of the simulated clock for mock runs.
    pub now: DateTime<Utc>,
    #[serde(default = "default_language")]
    pub language: String,
    /// How the simulated user would rate the session. Drives failure tagging.
    #[serde(default)]
    pub success: Option<bool>,
    #[serde(default)]
    pub expected_failures: Option<Vec<FailureCategory>>,
    #[serde(default)]
    pub pages: Vec<Page>,
    pub steps: Vec<Step>,
}

fn default_language() -> String {
    "en".into()
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error("scenario {name}: {message}")]
    Invalid { name: String, message: String },
    #[error("scenario {name}, step {step}: {message}")]
    Turn { name: String, step: usize, message: String },
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Read a scenario file. Fixture paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let err = |message: String| ScenarioError::Load { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut s = Self::from_toml(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        s.catalog = base.join(&s.catalog);
        s.mock_script = s.mock_script.map(|p| base.join(p));
        Ok(s)
    }

    pub fn validate(&self, provider: &ProviderChoice) -> Result<(), ScenarioError> {
        let invalid = |message: String| ScenarioError::Invalid { name: self.name.clone(), message };
        if self.steps.is_empty() {
            return Err(invalid("no steps".into()));
        }
        if !self.catalog.is_file() {
            return Err(invalid(format!("catalog {} not found", self.catalog.display())));
        }
        if matches!(provider, ProviderChoice::Mock) {
            match &self.mock_script {
                None => return Err(invalid("mock runs need mock_script".into())),
                Some(p) if !p.is_file() => return Err(invalid(format!("mock script {} not found", p.display()))),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderChoice {
    /// Scripted replies on a simulated clock.
    Mock,
    Http(HttpProviderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub turn_id: u64,
    pub action: ActionKind,
    pub outcome: TurnOutcome,
    pub passed: bool,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub steps: Vec<StepReport>,
    pub failure_tags: Vec<FailureTag>,
    /// Set when the tags differ from `expected_failures`.
    pub failure_mismatch: Option<String>,
    pub metrics: MetricsReport,
    pub logs: Vec<TurnLog>,
}

impl ScenarioReport {
    pub fn steps_passed(&self) -> usize {
        self.steps.iter().filter(|s| s.passed).count()
    }

    pub fn logs_jsonl(&self) -> String {
        export_logs(&self.logs, LogFormat::Jsonl, false)
    }

    /// One line per step plus a verdict line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let mark = if s.passed { "ok  " } else { "FAIL" };
            out.push_str(&format!("  {mark} step {} ({:?}, {:?})", s.step, s.action, s.outcome));
            if !s.mismatches.is_empty() {
                out.push_str(&format!(": {}", s.mismatches.join("; ")));
            }
            out.push('\n');
        }
        if let Some(m) = &self.failure_mismatch {
            out.push_str(&format!("  FAIL failure tags: {m}\n"));
        }
        out.push_str(&format!(
            "{}: {}/{} steps passed{}\n",
            self.name,
            self.steps_passed(),
            self.steps.len(),
            if self.passed { "" } else { " (FAILED)" }
        ));
        out
    }
}

fn check(expect: &Expectation, log: &TurnLog, window: &TimeWindow) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(a) = expect.action {
        if a != log.action {
            out.push(format!("action: expected {a:?}, got {:?}", log.action));
        }
    }
    if let Some(o) = expect.outcome {
        if o != log.outcome {
            out.push(format!("outcome: expected {o:?}, got {:?}", log.outcome));
        }
    }
    if let Some(ids) = &expect.slate_ids {
        let got = log.slate_ids();
        if *ids != got {
            out.push(format!("slate: expected {ids:?}, got {got:?}"));
        }
    }
    if let Some(ids) = &expect.slate_members {
        let mut want = ids.clone();
        want.sort();
        let mut got = log.slate_ids();
        got.sort();
        if want != got {
            out.push(format!("slate members: expected {want:?}, got {got:?}"));
        }
    }
    if let Some(w) = &expect.window {
        if w != window {
            out.push(format!("window: expected {} to {}, got {} to {}", w.start, w.end, window.start, window.end));
        }
    }
    if let Some(t) = &expect.text_contains {
        if !log.assistant_text.contains(t.as_str()) {
            out.push(format!("text: {t:?} not in {:?}", log.assistant_text));
        }
    }
    if let Some(t) = &expect.text_excludes {
        if log.assistant_text.contains(t.as_str()) {
            out.push(format!("text: {t:?} must not appear"));
        }
    }
    if let Some(calls) = &expect.stage_calls {
        let mut got: BTreeMap<Stage, usize> = BTreeMap::new();
        for p in &log.prompts {
            *got.entry(p.stage).or_default() += 1;
        }
        for (stage, n) in calls {
            let g = got.get(stage).copied().unwrap_or(0);
            if g != *n {
                out.push(format!("{stage:?} calls: expected {n}, got {g}"));
            }
        }
    }
    out
}

fn failure_check(expected: &Option<Vec<FailureCategory>>, tags: &[FailureTag]) -> Option<String> {
    let expected = expected.as_ref()?;
    let mut want = expected.clone();
    want.sort();
    let mut got: Vec<FailureCategory> = tags.iter().map(|t| t.category).collect();
    got.sort();
    (want != got).then(|| format!("expected {want:?}, got {got:?}"))
}

/// Build the engine a scenario runs against.
pub fn scenario_engine(scenario: &Scenario, provider: &ProviderChoice) -> Result<(Engine, Arc<MemoryStore>), ScenarioError> {
    scenario.validate(provider)?;
    let load = |path: &Path, message: String| ScenarioError::Load { path: path.to_path_buf(), message };
    let catalog = load_catalog(&scenario.catalog).map_err(|e| load(&scenario.catalog, e))?;
    let (clock, provider): (Arc<dyn Clock>, Arc<dyn Provider>) = match provider {
        ProviderChoice::Mock => {
            let clock: Arc<dyn Clock> = Arc::new(SimulatedClock::starting_at(scenario.now));
            let script = scenario.mock_script.as_ref().expect("validated");
            let mock = MockProvider::from_file(script, clock.clone()).map_err(|e| load(script, e.to_string()))?;
            (clock, Arc::new(mock))
        }
        ProviderChoice::Http(cfg) => (Arc::new(SystemClock), Arc::new(HttpProvider::new(cfg.clone()))),
    };
    let gateway = Arc::new(Gateway::new(provider, UsdRate::default(), clock));
    let store = Arc::new(MemoryStore::new());
    let fetcher = scenario.pages.iter().fold(StaticFetcher::new(), |f, p| f.with_page(&p.url, &p.body));
    let engine = Engine::new(Arc::new(catalog), gateway, store.clone()).with_fetcher(Arc::new(fetcher));
    Ok((engine, store))
}

/// Execute every step through the engine and check its expectations.
pub fn run_scenario(scenario: &Scenario, provider: &ProviderChoice) -> Result<ScenarioReport, ScenarioError> {
    let (engine, store) = scenario_engine(scenario, provider)?;
    let mut state = engine.new_session(&scenario.name, &scenario.language);
    let mut steps = Vec::new();
    let mut logs = Vec::new();
    for (i, step) in scenario.steps.iter().enumerate() {
        let (next, result) = engine.take_turn(&state, step.input.clone()).map_err(|e| ScenarioError::Turn {
            name: scenario.name.clone(),
            step: i + 1,
            message: e.to_string(),
        })?;
        let mismatches = check(&step.expect, &result.log, &next.time_window);
        steps.push(StepReport {
            step: i + 1,
            turn_id: result.turn_id,
            action: result.log.action,
            outcome: result.log.outcome,
            passed: mismatches.is_empty(),
            mismatches,
        });
        logs.push(result.log);
        state = next;
    }
    let failure_tags = scenario.success.map(|ok| classify_failures(&logs, ok)).unwrap_or_default();
    let failure_mismatch = failure_check(&scenario.expected_failures, &failure_tags);
    let records = store.snapshot().map_err(|e| ScenarioError::Invalid { name: scenario.name.clone(), message: e.to_string() })?;
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        passed: steps.iter().all(|s| s.passed) && failure_mismatch.is_none(),
        steps,
        failure_tags,
        failure_mismatch,
        metrics: aggregate(&records, &ReportFilter::default()),
        logs,
    })
}

/// Run several scenarios, optionally on one thread each. Reports come back
/// in input order.
pub fn run_all(scenarios: &[Scenario], provider: &ProviderChoice, parallel: bool) -> Vec<Result<ScenarioReport, ScenarioError>> {
    if !parallel {
        return scenarios.iter().map(|s| run_scenario(s, provider)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run_scenario(s, provider))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    })
}
