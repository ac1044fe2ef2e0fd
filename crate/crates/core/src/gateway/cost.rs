use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use super::TokenUsage;
use crate::Money;

/// Price per 1000 tokens, charged identically for prompt and completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRate<T> {
    pub usd_per_1000_tokens: T,
}

impl Default for CostRate<Money> {
    fn default() -> Self {
        CostRate {
            usd_per_1000_tokens: Money::new(2, 3),
        }
    }
}

impl<T: Num + Copy + PartialOrd> CostRate<T> {
    /// `None` unless the rate is strictly positive.
    pub fn new(usd_per_1000_tokens: T) -> Option<Self> {
        (usd_per_1000_tokens > T::zero()).then_some(CostRate { usd_per_1000_tokens })
    }
}

/// `total_tokens * rate / 1000`. Exact when `T` is a decimal type.
pub fn cost_of<T>(usage: &TokenUsage, rate: &CostRate<T>) -> T
where
    T: Num + Copy + FromPrimitive,
{
    let tokens = T::from_usize(usage.total_tokens).expect("token count representable");
    let thousand = T::from_u32(1000).expect("1000 representable");
    tokens * rate.usd_per_1000_tokens / thousand
}
