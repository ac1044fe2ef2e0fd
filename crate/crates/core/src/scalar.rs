use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar accepted by the numeric routines.
pub trait Real: Float + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static {
    fn from_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable as a float")
    }

    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal is representable")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Debug + 'static {}

/// Median with the even-count convention of averaging the two central values.
/// Returns `None` for an empty population.
pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) / T::lit(2.0))
    }
}

pub fn mean<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(T::zero(), |acc, v| acc + *v);
    Some(sum / <T as Real>::from_usize(values.len()))
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd<T: Real>(values: &[T]) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss = values.iter().fold(T::zero(), |acc, v| acc + (*v - m) * (*v - m));
    Some((ss / <T as Real>::from_usize(values.len() - 1)).sqrt())
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot(a, b) / (na * nb)
}

/// Serde for `Option<Money>` as an optional decimal string. Reads `null`
/// and absent fields back as `None`.
pub mod opt_money {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Money;

    pub fn serialize<S: Serializer>(v: &Option<Money>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|m| m.to_string()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Money>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| t.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}
