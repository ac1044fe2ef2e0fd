//! Synthetic respondents drawn from a path model with known coefficients.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Construct, Dataset, ModelError, PathModel, SurveyResponse};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec<T> {
    pub model: PathModel,
    /// True B per (predictor, dependent) edge. Missing edges count as 0.
    pub coefficients: BTreeMap<(Construct, Construct), T>,
    /// Intercept per dependent. Missing intercepts count as 0.
    pub intercepts: BTreeMap<Construct, T>,
    pub residual_sd: BTreeMap<Construct, T>,
    /// (mean, sd) per exogenous construct.
    pub exogenous: BTreeMap<Construct, (T, T)>,
}

/// Continuous draws, before discretization. Deterministic per seed.
pub fn simulate_continuous<T: Real>(spec: &SimulationSpec<T>, n: usize, seed: u64) -> Result<Dataset<T>, ModelError>
where
    StandardNormal: Distribution<T>,
{
    let order = spec.model.topological_order()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: BTreeMap<Construct, Vec<T>> = BTreeMap::new();
    for c in order {
        let column = match spec.model.equation(c) {
            None => {
                let (m, sd) = spec.exogenous.get(&c).copied().unwrap_or((T::zero(), T::one()));
                let dist = Normal::new(m, sd).expect("exogenous sd is finite and non-negative");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
            Some(eq) => {
                let sd = spec.residual_sd.get(&c).copied().unwrap_or(T::zero());
                let dist = Normal::new(T::zero(), sd).expect("residual sd is finite and non-negative");
                let a = spec.intercepts.get(&c).copied().unwrap_or(T::zero());
                (0..n)
                    .map(|i| {
                        let mut v = a;
                        for p in &eq.predictors {
                            let b = spec.coefficients.get(&(*p, c)).copied().unwrap_or(T::zero());
                            v = v + b * data[p][i];
                        }
                        v + dist.sample(&mut rng)
                    })
                    .collect()
            }
        };
        data.insert(c, column);
    }
    Ok(Dataset::new(data))
}

/// Clamp to [1, 5] and round half up.
pub fn discretize<T: Real>(v: T) -> u8 {
    let c = v.max(T::one()).min(T::lit(5.0));
    (c + T::lit(0.5)).floor().to_u8().expect("clamped value fits in u8")
}

/// Discretized synthetic responses. Constructs outside the model get the
/// scale midpoint. Every response is marked successful with effort 2.
pub fn simulate_responses<T: Real>(
    spec: &SimulationSpec<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<SurveyResponse>, ModelError>
where
    StandardNormal: Distribution<T>,
{
    let data = simulate_continuous(spec, n, seed)?;
    Ok((0..n)
        .map(|i| SurveyResponse {
            response_id: format!("sim-{seed}-{i}"),
            session_id: format!("sim-{seed}-{i}"),
            items: Construct::ALL
                .into_iter()
                .map(|c| (c, data.column(c).map_or(3, |col| discretize(col[i]))))
                .collect(),
            success: true,
            perceived_effort: Some(2),
            general_problems: None,
            demographics: None,
        })
        .collect())
}
