use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Construct;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub dependent: Construct,
    pub predictors: Vec<Construct>,
}

/// Recursive system of regressions among observed constructs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathModel {
    pub equations: Vec<Equation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("the model has a cycle through {0}")]
    Cycle(Construct),
    #[error("{0} has more than one equation")]
    DuplicateEquation(Construct),
    #[error("equation for {0} has no predictors")]
    EmptyEquation(Construct),
    #[error("{predictor} is listed twice in the equation for {dependent}")]
    DuplicatePredictor { dependent: Construct, predictor: Construct },
    #[error("model file: {0}")]
    Parse(String),
}

impl PathModel {
    /// The CRS-adapted short-form model.
    pub fn default_model() -> Self {
        use Construct::*;
        let eq = |dependent, predictors: &[Construct]| Equation { dependent, predictors: predictors.to_vec() };
        PathModel {
            equations: vec![
                eq(Control, &[InputProcessingPerformance, Consistency, Coherence]),
                eq(PerceivedUsefulness, &[RecommendationAccuracy, Control, Consistency, InterfaceAdequacy, Coherence]),
                eq(Confidence, &[PerceivedUsefulness]),
                eq(OverallSatisfaction, &[PerceivedUsefulness, Control]),
                eq(FutureUse, &[OverallSatisfaction]),
            ],
        }
    }

    /// Parse from JSON and validate.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: PathModel = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn equation(&self, dependent: Construct) -> Option<&Equation> {
        self.equations.iter().find(|e| e.dependent == dependent)
    }

    /// Constructs that appear only as predictors.
    pub fn exogenous(&self) -> Vec<Construct> {
        let deps: BTreeSet<_> = self.equations.iter().map(|e| e.dependent).collect();
        let preds: BTreeSet<_> = self.equations.iter().flat_map(|e| e.predictors.iter().copied()).collect();
        preds.difference(&deps).copied().collect()
    }

    /// Every edge as (predictor, dependent), in equation order.
    pub fn edges(&self) -> Vec<(Construct, Construct)> {
        self.equations.iter().flat_map(|e| e.predictors.iter().map(move |p| (*p, e.dependent))).collect()
    }

    pub fn max_predictors(&self) -> usize {
        self.equations.iter().map(|e| e.predictors.len()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for e in &self.equations {
            if !seen.insert(e.dependent) {
                return Err(ModelError::DuplicateEquation(e.dependent));
            }
            if e.predictors.is_empty() {
                return Err(ModelError::EmptyEquation(e.dependent));
            }
            let mut ps = BTreeSet::new();
            for p in &e.predictors {
                if !ps.insert(*p) {
                    return Err(ModelError::DuplicatePredictor { dependent: e.dependent, predictor: *p });
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    /// All constructs in the model, each after its predictors. Exogenous
    /// constructs come first, in construct order.
    pub fn topological_order(&self) -> Result<Vec<Construct>, ModelError> {
        let mut order = self.exogenous();
        let mut done: BTreeSet<Construct> = order.iter().copied().collect();
        let mut pending: BTreeMap<Construct, &Equation> = self.equations.iter().map(|e| (e.dependent, e)).collect();
        while !pending.is_empty() {
            let ready: Vec<Construct> = pending
                .values()
                .filter(|e| e.predictors.iter().all(|p| done.contains(p)))
                .map(|e| e.dependent)
                .collect();
            if ready.is_empty() {
                return Err(ModelError::Cycle(*pending.keys().next().expect("non-empty")));
            }
            for c in ready {
                pending.remove(&c);
                done.insert(c);
                order.push(c);
            }
        }
        Ok(order)
    }
}
