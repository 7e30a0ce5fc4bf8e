//! Small numerical statistics helpers with deterministic accumulation order.
//!
//! Reductions over Monte Carlo paths must not depend on how work was split
//! across threads, so every aggregate in this crate funnels through the
//! fixed-order pairwise sums below.

/// Pairwise (cascade) summation in index order.
///
/// Deterministic given the slice contents and slightly more accurate than a
/// naive left fold for long arrays.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean of a nonempty slice.
pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    pairwise_sum(values) / values.len() as f64
}

/// Sample mean and standard error of the mean.
///
/// Returns `(mean, se)` with `se = sample_std / sqrt(n)`; `se` is 0 for a
/// single observation. The variance uses the n-1 normalization and is clamped
/// at zero to absorb cancellation noise for constant inputs.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    debug_assert!(n > 0);
    let m = mean(values);
    if n == 1 {
        return (m, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    let var = (pairwise_sum(&centered) / (n as f64 - 1.0)).max(0.0);
    (m, (var / n as f64).sqrt())
}

/// Ordinary least squares slope of `y` against `x` (with intercept).
///
/// Used for log-log rate fits. Returns `None` when fewer than two distinct
/// abscissae are available.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx = pairwise_sum(&x.iter().map(|v| (v - mx) * (v - mx)).collect::<Vec<_>>());
    if sxx <= 0.0 {
        return None;
    }
    let sxy = pairwise_sum(
        &x.iter()
            .zip(y)
            .map(|(a, b)| (a - mx) * (b - my))
            .collect::<Vec<_>>(),
    );
    Some(sxy / sxx)
}

/// Evenly spaced grid of `n >= 1` values from `a` to `b` inclusive.
///
/// `n == 1` yields `[a]`. Endpoints are exact.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![a];
    }
    let mut out = Vec::with_capacity(n);
    let step = (b - a) / (n - 1) as f64;
    for i in 0..n {
        out.push(if i == n - 1 { b } else { a + step * i as f64 });
    }
    out
}
