//! Short-form ResQue evaluation: survey intake, descriptive statistics and
//! the recursive path model.
//!
//! Each equation of the path model is estimated separately by least squares.
//! For a recursive model over observed variables these are also the
//! maximum-likelihood point estimates, so no covariance-structure fitting is
//! done and global fit indices are not reported.

mod model;
mod ols;
pub mod reference;
mod simulate;
mod survey;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub use model::{Equation, ModelError, PathModel};
pub use ols::{ols, t_p_value, OlsError, OlsFit};
pub use simulate::{discretize, simulate_continuous, simulate_responses, SimulationSpec};
pub use survey::{
    descriptive_stats, responses_to_csv, validate_response, Construct, ConstructStats, Demographics,
    DescriptiveStats, SurveyError, SurveyResponse, LIKERT_MAX, LIKERT_MIN,
};

/// One column of values per construct, all of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    columns: BTreeMap<Construct, Vec<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(columns: BTreeMap<Construct, Vec<T>>) -> Self {
        Dataset { columns }
    }

    pub fn from_responses(responses: &[SurveyResponse]) -> Self {
        let columns = Construct::ALL
            .into_iter()
            .map(|c| (c, responses.iter().map(|r| T::lit(f64::from(r.item(c)))).collect()))
            .collect();
        Dataset { columns }
    }

    pub fn column(&self, c: Construct) -> Option<&[T]> {
        self.columns.get(&c).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEstimate<T> {
    #[serde(rename = "Independent variable")]
    pub predictor: Construct,
    #[serde(rename = "Dependent variable")]
    pub dependent: Construct,
    #[serde(rename = "Unstandardized estimate (B)")]
    pub b: T,
    #[serde(rename = "Standardized estimate (β)")]
    pub beta: T,
    #[serde(rename = "Standard Error")]
    pub se: T,
    #[serde(rename = "p-value")]
    pub p: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationFit<T> {
    pub dependent: Construct,
    pub intercept: T,
    pub r_squared: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate<T> {
    pub n: usize,
    pub edges: Vec<EdgeEstimate<T>>,
    pub equations: Vec<EquationFit<T>>,
}

impl<T: Real> PathEstimate<T> {
    pub fn edge(&self, predictor: Construct, dependent: Construct) -> Option<&EdgeEstimate<T>> {
        self.edges.iter().find(|e| e.predictor == predictor && e.dependent == dependent)
    }

    pub fn equation(&self, dependent: Construct) -> Option<&EquationFit<T>> {
        self.equations.iter().find(|e| e.dependent == dependent)
    }
}

impl<T: Real + Serialize> PathEstimate<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimates serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{n} responses are too few for an equation with {k} predictors")]
    TooFewResponses { n: usize, k: usize },
    #[error("collinear predictors {first} and {second} in the equation for {dependent}")]
    SingularDesign { dependent: Construct, first: Construct, second: Construct },
    #[error("{0} has no variance")]
    NoVariance(Construct),
    #[error("no data for {0}")]
    MissingConstruct(Construct),
}

/// Estimate every equation of `model` on `data`.
pub fn fit_dataset<T: Real>(data: &Dataset<T>, model: &PathModel) -> Result<PathEstimate<T>, PathError> {
    model.validate()?;
    let n = data.len();
    let mut edges = Vec::new();
    let mut equations = Vec::new();
    for eq in &model.equations {
        let col = |c: Construct| data.column(c).ok_or(PathError::MissingConstruct(c));
        let y = col(eq.dependent)?;
        let xs = eq.predictors.iter().map(|p| col(*p)).collect::<Result<Vec<_>, _>>()?;
        let fit = ols(y, &xs).map_err(|e| match e {
            OlsError::TooFewObservations { n, k } => PathError::TooFewResponses { n, k },
            OlsError::Singular { column, partner } => {
                let first = eq.predictors[column];
                match partner {
                    Some(j) => PathError::SingularDesign { dependent: eq.dependent, first: eq.predictors[j], second: first },
                    None => PathError::NoVariance(first),
                }
            }
            OlsError::ConstantDependent => PathError::NoVariance(eq.dependent),
            OlsError::Ragged => PathError::MissingConstruct(eq.dependent),
        })?;
        for (j, p) in eq.predictors.iter().enumerate() {
            edges.push(EdgeEstimate {
                predictor: *p,
                dependent: eq.dependent,
                b: fit.coefficients[j],
                beta: fit.standardized[j],
                se: fit.std_errors[j],
                p: fit.p_values[j],
            });
        }
        equations.push(EquationFit { dependent: eq.dependent, intercept: fit.intercept, r_squared: fit.r_squared });
    }
    Ok(PathEstimate { n, edges, equations })
}

/// Estimate the path model on survey responses.
pub fn fit_path_model(responses: &[SurveyResponse], model: &PathModel) -> Result<PathEstimate<f64>, PathError> {
    fit_dataset(&Dataset::from_responses(responses), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Construct::*;

    fn sample(n: usize, seed: u64) -> Vec<SurveyResponse> {
        simulate_responses(&reference::reference_spec(), n, seed).unwrap()
    }

    #[test]
    fn copy_edge_has_unit_coefficients() {
        let mut rs = sample(200, 3);
        for r in &mut rs {
            let os = r.item(OverallSatisfaction);
            r.items.insert(FutureUse, os);
        }
        let est = fit_path_model(&rs, &PathModel::default_model()).unwrap();
        let e = est.edge(OverallSatisfaction, FutureUse).unwrap();
        assert!((e.b - 1.0).abs() < 1e-9);
        assert!((e.beta - 1.0).abs() < 1e-9);
        assert!(e.p < 1e-12);
    }

    #[test]
    fn equal_predictors_name_the_pair() {
        let mut rs = sample(200, 4);
        for r in &mut rs {
            let c = r.item(Consistency);
            r.items.insert(Coherence, c);
        }
        let err = fit_path_model(&rs, &PathModel::default_model()).unwrap_err();
        assert_eq!(err, PathError::SingularDesign { dependent: Control, first: Consistency, second: Coherence });
    }

    #[test]
    fn too_few_responses() {
        let err = fit_path_model(&sample(6, 1), &PathModel::default_model()).unwrap_err();
        assert_eq!(err, PathError::TooFewResponses { n: 6, k: 5 });
    }

    #[test]
    fn order_does_not_matter() {
        let rs = sample(300, 5);
        let mut shuffled = rs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let a = fit_path_model(&rs, &PathModel::default_model()).unwrap();
        let b = fit_path_model(&shuffled, &PathModel::default_model()).unwrap();
        for (x, y) in a.edges.iter().zip(&b.edges) {
            assert!((x.b - y.b).abs() < 1e-9 && (x.p - y.p).abs() < 1e-9);
        }
    }

    #[test]
    fn json_uses_report_column_names() {
        let est = fit_path_model(&sample(100, 2), &PathModel::default_model()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&est.to_json()).unwrap();
        let e = &v["edges"][0];
        for key in ["Unstandardized estimate (B)", "Standardized estimate (β)", "Standard Error", "p-value"] {
            assert!(e.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // beta is unchanged by an affine rescale of a predictor; B scales by 1/a.
        #[test]
        fn beta_is_affine_invariant(seed in 0u64..1000, a in 0.2f64..5.0, shift in -10.0f64..10.0) {
            let spec = reference::reference_spec();
            let data = simulate_continuous(&spec, 200, seed).unwrap();
            let model = PathModel::default_model();
            let base = fit_dataset(&data, &model).unwrap();
            let mut cols: BTreeMap<Construct, Vec<f64>> =
                Construct::ALL.iter().map(|c| (*c, data.column(*c).unwrap().to_vec())).collect();
            for v in cols.get_mut(&Control).unwrap() {
                *v = a * *v + shift;
            }
            let scaled = fit_dataset(&Dataset::new(cols), &model).unwrap();
            let b0 = base.edge(Control, PerceivedUsefulness).unwrap();
            let b1 = scaled.edge(Control, PerceivedUsefulness).unwrap();
            prop_assert!((b0.beta - b1.beta).abs() < 1e-9);
            prop_assert!((b0.b / a - b1.b).abs() < 1e-9);
            prop_assert!((b0.p - b1.p).abs() < 1e-9);
            // As a dependent, Control's B from its predictors scales by a.
            let c0 = base.edge(Consistency, Control).unwrap();
            let c1 = scaled.edge(Consistency, Control).unwrap();
            prop_assert!((c0.beta - c1.beta).abs() < 1e-9);
            prop_assert!((c0.b * a - c1.b).abs() < 1e-9);
        }
    }
}
