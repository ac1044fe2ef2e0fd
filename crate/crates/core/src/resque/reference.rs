//! Published path estimates of the short-form model, and a simulation spec
//! that regenerates data with those coefficients.

use std::collections::BTreeMap;

use super::{Construct, PathModel, SimulationSpec};
use Construct::*;

/// How a p-value was reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReportedP {
    Exact(f64),
    Below(f64),
}

impl ReportedP {
    pub fn significant(self, alpha: f64) -> bool {
        match self {
            ReportedP::Exact(p) => p < alpha,
            ReportedP::Below(p) => p <= alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportedPath {
    pub predictor: Construct,
    pub dependent: Construct,
    pub b: f64,
    pub beta: f64,
    pub se: f64,
    pub p: ReportedP,
}

const fn path(predictor: Construct, dependent: Construct, b: f64, beta: f64, se: f64, p: ReportedP) -> ReportedPath {
    ReportedPath { predictor, dependent, b, beta, se, p }
}

pub const REPORTED_PATHS: [ReportedPath; 12] = [
    path(OverallSatisfaction, FutureUse, 0.566, 0.503, 0.131, ReportedP::Below(0.001)),
    path(PerceivedUsefulness, OverallSatisfaction, 0.573, 0.513, 0.126, ReportedP::Below(0.001)),
    path(Control, OverallSatisfaction, 0.241, 0.212, 0.151, ReportedP::Exact(0.111)),
    path(PerceivedUsefulness, Confidence, 0.733, 0.683, 0.075, ReportedP::Below(0.001)),
    path(InputProcessingPerformance, Control, 0.324, 0.319, 0.134, ReportedP::Exact(0.015)),
    path(Consistency, Control, 0.093, 0.101, 0.124, ReportedP::Exact(0.454)),
    path(Coherence, Control, 0.216, 0.216, 0.146, ReportedP::Exact(0.139)),
    path(RecommendationAccuracy, PerceivedUsefulness, 0.329, 0.36, 0.122, ReportedP::Exact(0.007)),
    path(Control, PerceivedUsefulness, 0.205, 0.202, 0.092, ReportedP::Exact(0.025)),
    path(Consistency, PerceivedUsefulness, 0.328, 0.352, 0.098, ReportedP::Exact(0.001)),
    path(InterfaceAdequacy, PerceivedUsefulness, -0.035, -0.028, 0.083, ReportedP::Exact(0.676)),
    // B and beta disagree in sign for this row as published; B is used.
    path(Coherence, PerceivedUsefulness, -0.021, 0.002, 0.106, ReportedP::Exact(0.844)),
];

/// Paths reported as significant at .05.
pub fn significant_paths() -> Vec<(Construct, Construct)> {
    REPORTED_PATHS.iter().filter(|p| p.p.significant(0.05)).map(|p| (p.predictor, p.dependent)).collect()
}

pub fn reported(predictor: Construct, dependent: Construct) -> Option<&'static ReportedPath> {
    REPORTED_PATHS.iter().find(|p| p.predictor == predictor && p.dependent == dependent)
}

/// Construct standard deviations implied by the reported B/beta pairs
/// (beta = B * sd(x) / sd(y)), with PerceivedUsefulness fixed at 1.
pub const IMPLIED_SD: [(Construct, f64); 10] = [
    (RecommendationAccuracy, 1.094),
    (InterfaceAdequacy, 0.8),
    (Consistency, 1.073),
    (Coherence, 0.985),
    (InputProcessingPerformance, 0.970),
    (Control, 0.985),
    (PerceivedUsefulness, 1.0),
    (Confidence, 1.0732),
    (OverallSatisfaction, 1.117),
    (FutureUse, 1.257),
];

/// Mean of every construct in the reference simulation.
pub const REFERENCE_MEAN: f64 = 3.5;

fn implied_sd(c: Construct) -> f64 {
    IMPLIED_SD.iter().find(|(k, _)| *k == c).map(|(_, v)| *v).expect("every construct has an sd")
}

/// Default model with the reported B values. Exogenous constructs are
/// independent normals; residual variances are chosen so every construct
/// has its implied sd, and intercepts keep every mean at 3.5.
pub fn reference_spec() -> SimulationSpec<f64> {
    let model = PathModel::default_model();
    let coefficients: BTreeMap<(Construct, Construct), f64> =
        REPORTED_PATHS.iter().map(|p| ((p.predictor, p.dependent), p.b)).collect();
    let order = model.topological_order().expect("default model is acyclic");

    // Propagate the covariance matrix in topological order.
    let mut cov: BTreeMap<(Construct, Construct), f64> = BTreeMap::new();
    let get = |cov: &BTreeMap<(Construct, Construct), f64>, a: Construct, b: Construct| {
        cov.get(&(a, b)).copied().unwrap_or(0.0)
    };
    let mut residual_sd = BTreeMap::new();
    let mut intercepts = BTreeMap::new();
    let mut exogenous = BTreeMap::new();
    let mut seen: Vec<Construct> = Vec::new();
    for c in order {
        let target = implied_sd(c).powi(2);
        match model.equation(c) {
            None => {
                exogenous.insert(c, (REFERENCE_MEAN, implied_sd(c)));
            }
            Some(eq) => {
                let b = |p: &Construct| coefficients[&(*p, c)];
                let mut explained = 0.0;
                for p in &eq.predictors {
                    for q in &eq.predictors {
                        explained += b(p) * b(q) * get(&cov, *p, *q);
                    }
                }
                let resid = target - explained;
                assert!(resid > 0.0, "implied sd of {c} is below its explained variance");
                residual_sd.insert(c, resid.sqrt());
                intercepts.insert(c, REFERENCE_MEAN * (1.0 - eq.predictors.iter().map(b).sum::<f64>()));
                for z in &seen {
                    let v: f64 = eq.predictors.iter().map(|p| b(p) * get(&cov, *p, *z)).sum();
                    cov.insert((c, *z), v);
                    cov.insert((*z, c), v);
                }
            }
        }
        cov.insert((c, c), target);
        seen.push(c);
    }
    SimulationSpec { model, coefficients, intercepts, residual_sd, exogenous }
}
