//! Ordinary least squares with an intercept and classical inference.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::scalar::{mean, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit<T> {
    pub intercept: T,
    /// Raw-scale slopes, one per predictor.
    pub coefficients: Vec<T>,
    /// Slopes on z-scored variables.
    pub standardized: Vec<T>,
    pub std_errors: Vec<T>,
    pub p_values: Vec<T>,
    pub r_squared: T,
    pub n: usize,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OlsError {
    #[error("{n} observations cannot fit {k} predictors")]
    TooFewObservations { n: usize, k: usize },
    #[error("column lengths differ")]
    Ragged,
    /// Column `column` is (nearly) a linear combination of earlier ones;
    /// `partner` is the earlier column it correlates with most.
    #[error("predictor {column} is collinear")]
    Singular { column: usize, partner: Option<usize> },
    #[error("the dependent variable has no variance")]
    ConstantDependent,
}

/// Two-sided p-value of a t statistic.
pub fn t_p_value(t: f64, df: usize) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df is positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Regress `y` on `xs` (one slice per predictor) with an intercept.
pub fn ols<T: Real>(y: &[T], xs: &[&[T]]) -> Result<OlsFit<T>, OlsError> {
    let n = y.len();
    let k = xs.len();
    if xs.iter().any(|x| x.len() != n) {
        return Err(OlsError::Ragged);
    }
    if n <= k + 1 {
        return Err(OlsError::TooFewObservations { n, k });
    }
    let y_mean = mean(y).expect("n > 0");
    let x_means: Vec<T> = xs.iter().map(|x| mean(x).expect("n > 0")).collect();
    let yc: Vec<T> = y.iter().map(|v| *v - y_mean).collect();
    let xc: Vec<Vec<T>> = xs.iter().zip(&x_means).map(|(x, m)| x.iter().map(|v| *v - *m).collect()).collect();

    let cross = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |acc, (p, q)| acc + *p * *q);
    let syy = cross(&yc, &yc);
    if syy <= T::zero() {
        return Err(OlsError::ConstantDependent);
    }
    let sxx: Vec<Vec<T>> = xc.iter().map(|a| xc.iter().map(|b| cross(a, b)).collect()).collect();
    let sxy: Vec<T> = xc.iter().map(|a| cross(a, &yc)).collect();

    let inv = invert_centered(&sxx)?;
    let b: Vec<T> = inv.iter().map(|row| row.iter().zip(&sxy).fold(T::zero(), |acc, (a, s)| acc + *a * *s)).collect();
    let intercept = b.iter().zip(&x_means).fold(y_mean, |acc, (bj, m)| acc - *bj * *m);

    let mut sse = T::zero();
    for i in 0..n {
        let fitted = (0..k).fold(T::zero(), |acc, j| acc + b[j] * xc[j][i]);
        let r = yc[i] - fitted;
        sse = sse + r * r;
    }
    let df = n - k - 1;
    let sigma2 = sse / <T as Real>::from_usize(df);
    let std_errors: Vec<T> = (0..k).map(|j| (sigma2 * inv[j][j]).max(T::zero()).sqrt()).collect();
    let p_values = b
        .iter()
        .zip(&std_errors)
        .map(|(bj, se)| {
            if *se == T::zero() {
                T::zero()
            } else {
                T::lit(t_p_value((*bj / *se).to_f64().expect("finite"), df))
            }
        })
        .collect();
    let sd_y = syy.sqrt();
    let standardized = b.iter().enumerate().map(|(j, bj)| *bj * sxx[j][j].sqrt() / sd_y).collect();
    Ok(OlsFit {
        intercept,
        coefficients: b,
        standardized,
        std_errors,
        p_values,
        r_squared: T::one() - sse / syy,
        n,
        df,
    })
}

/// Gauss-Jordan inverse of a centered cross-product matrix, pivoting in
/// column order. A pivot that has lost almost all of its variance to earlier
/// columns marks that column as collinear.
fn invert_centered<T: Real>(s: &[Vec<T>]) -> Result<Vec<Vec<T>>, OlsError> {
    let k = s.len();
    let tol = T::epsilon() * T::lit(1e4);
    let mut a: Vec<Vec<T>> = s.to_vec();
    let mut inv: Vec<Vec<T>> = (0..k).map(|i| (0..k).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
    for col in 0..k {
        let pivot = a[col][col];
        if !(pivot > tol * s[col][col]) || s[col][col] <= T::zero() {
            return Err(OlsError::Singular { column: col, partner: most_correlated(s, col) });
        }
        for j in 0..k {
            a[col][j] = a[col][j] / pivot;
            inv[col][j] = inv[col][j] / pivot;
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let f = a[row][col];
            if f == T::zero() {
                continue;
            }
            for j in 0..k {
                a[row][j] = a[row][j] - f * a[col][j];
                inv[row][j] = inv[row][j] - f * inv[col][j];
            }
        }
    }
    Ok(inv)
}

fn most_correlated<T: Real>(s: &[Vec<T>], col: usize) -> Option<usize> {
    if s[col][col] <= T::zero() {
        return None;
    }
    (0..col)
        .filter(|j| s[*j][*j] > T::zero())
        .map(|j| (j, (s[col][j] / (s[col][col] * s[j][j]).sqrt()).abs()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite correlations"))
        .map(|(j, _)| j)
}
