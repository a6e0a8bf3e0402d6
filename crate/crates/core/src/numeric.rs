//! Order-independent reductions and the standard normal distribution.

use statrs::distribution::{ContinuousCDF, Normal};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Sums the values after sorting them, so the result does not depend on
/// the order in which the values arrive.
pub fn canonical_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Order-independent arithmetic mean. `None` on an empty input.
pub fn canonical_mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    Some(canonical_sum(v) / n)
}

/// Sample covariance matrix (denominator `n - 1`) of equally long rows.
/// Requires at least two rows.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    assert!(n >= 2, "sample covariance needs at least two rows");
    let k = rows[0].len();
    let means: Vec<f64> = (0..k)
        .map(|j| canonical_sum(rows.iter().map(|r| r[j])) / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let s = canonical_sum(rows.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])));
            cov[a][b] = s / (n as f64 - 1.0);
            cov[b][a] = cov[a][b];
        }
    }
    cov
}

/// `xᵀ M y`.
pub fn bilinear(x: &[f64], m: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            total += x[i] * v * y[j];
        }
    }
    total
}

/// Standard normal CDF, `erfc(-x / sqrt 2) / 2`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile, refined by two Newton steps on the CDF.
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0, 1)");
    let mut x = Normal::standard().inverse_cdf(p);
    for _ in 0..2 {
        let density = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
        if density <= 0.0 {
            break;
        }
        x -= (norm_cdf(x) - p) / density;
    }
    x
}
