//! Cross-sectional least squares for conditional expectations.
//!
//! The backward solver estimates `E[Y_{k+1} | X_k]` by projecting samples
//! onto a small feature space: monomials in `x` up to a total degree, plus
//! the domain level `l(x)` (which captures boundary layers; included from
//! degree 1 up). Columns are standardized, zero-variance columns dropped,
//! and the normal equations solved with a dense Cholesky factorization; a
//! ridge term steps in when the pivot-ratio condition estimate exceeds
//! [`COND_LIMIT`].
//!
//! Determinism contract: rows are accumulated in fixed chunks of
//! [`CHUNK_ROWS`] and the partial sums combined in chunk order, so the fit
//! is bit-identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::DomainSpec;

/// Fixed accumulation block; chunk boundaries define the summation tree.
pub const CHUNK_ROWS: usize = 4096;

/// Pivot-ratio condition estimate beyond which the ridge fallback engages.
pub const COND_LIMIT: f64 = 1e10;

/// Columns with standard deviation below this (relative to the mean scale)
/// are treated as constant and dropped. The one-pass variance carries
/// cancellation noise of about sqrt(machine eps) ~ 1.5e-8 relative, and a
/// column this flat has no resolvable signal after standardization.
const SD_FLOOR: f64 = 1e-7;

/// Feature layout for one regression: graded monomials in `x` (constant
/// excluded; the intercept is handled separately) plus optionally `l(x)`.
#[derive(Debug, Clone)]
pub struct RegressionPlan {
    pub dim: usize,
    pub degree: usize,
    pub include_level: bool,
    exponents: Vec<Vec<usize>>,
}

impl RegressionPlan {
    /// Monomials of total degree 1..=degree in `dim` variables, graded
    /// order; the level feature rides along whenever degree >= 1 (a
    /// degree-0 plan is a pure per-step mean, which the monotone-comparison
    /// property relies on).
    pub fn new(degree: usize, dim: usize) -> Self {
        let mut exponents = Vec::new();
        let mut current = vec![vec![0usize; dim]];
        for _ in 1..=degree {
            let mut next = Vec::new();
            for e in &current {
                // Raise one coordinate, keeping graded-lexicographic order
                // and skipping duplicates (only raise at or after the last
                // raised coordinate).
                let last_raised = e.iter().rposition(|&p| p > 0).unwrap_or(0);
                for c in last_raised..dim {
                    let mut raised = e.clone();
                    raised[c] += 1;
                    next.push(raised);
                }
            }
            exponents.extend(next.iter().cloned());
            current = next;
        }
        RegressionPlan {
            dim,
            degree,
            include_level: degree >= 1,
            exponents,
        }
    }

    /// Number of non-intercept features.
    pub fn n_features(&self) -> usize {
        self.exponents.len() + usize::from(self.include_level)
    }

    /// Evaluate the features of one state into `out`.
    pub fn eval_features(&self, x: &[f64], domain: &DomainSpec, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.n_features());
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (xi, &p) in x.iter().zip(e) {
                for _ in 0..p {
                    v *= xi;
                }
            }
            *o = v;
        }
        if self.include_level {
            out[self.exponents.len()] = domain.level(x);
        }
    }
}

/// Fit quality and conditioning record for one regression.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FitDiagnostics {
    /// Pivot-ratio estimate of the standardized Gram condition number.
    pub condition: f64,
    /// Ridge added to the Gram diagonal (0 when plain least squares held).
    pub ridge: f64,
    /// Features dropped for having no sample variance.
    pub dropped: usize,
    /// Root mean square residual of the first response.
    pub residual_rms: f64,
}

/// Project each response onto the feature span and return the fitted values
/// (one vector per response, same row order) with diagnostics.
///
/// `states` is row-major `n x plan.dim`. All responses share the single
/// factorization. With every feature constant across rows (for instance
/// all paths at one point under zero diffusion), the fit degenerates to the
/// per-response mean, which is the exact conditional expectation there.
pub fn fit_conditional(
    plan: &RegressionPlan,
    domain: &DomainSpec,
    states: &[f64],
    responses: &[&[f64]],
) -> Result<(Vec<Vec<f64>>, FitDiagnostics)> {
    let d = plan.dim;
    if d == 0 || states.len() % d != 0 {
        return Err(Error::Shape(format!(
            "state buffer of {} values is not a multiple of dim {d}",
            states.len()
        )));
    }
    let n = states.len() / d;
    if n == 0 {
        return Err(Error::Shape("regression needs at least one row".into()));
    }
    for (r, resp) in responses.iter().enumerate() {
        if resp.len() != n {
            return Err(Error::Shape(format!(
                "response {r} has {} rows, states have {n}",
                resp.len()
            )));
        }
    }
    let p = plan.n_features();
    let n_resp = responses.len();

    // Pass 1: per-chunk sums for feature and response means/variances,
    // combined in chunk order.
    let chunk_stats: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = states
        .par_chunks(CHUNK_ROWS * d)
        .map(|rows| {
            let offset_rows = 0; // responses are indexed through absolute rows below
            let _ = offset_rows;
            let mut feat = vec![0.0; p];
            let mut sum = vec![0.0; p];
            let mut sumsq = vec![0.0; p];
            for x in rows.chunks_exact(d) {
                plan.eval_features(x, domain, &mut feat);
                for j in 0..p {
                    sum[j] += feat[j];
                    sumsq[j] += feat[j] * feat[j];
                }
            }
            (sum, sumsq, Vec::new())
        })
        .collect();
    let mut f_sum = vec![0.0; p];
    let mut f_sumsq = vec![0.0; p];
    for (s, sq, _) in &chunk_stats {
        for j in 0..p {
            f_sum[j] += s[j];
            f_sumsq[j] += sq[j];
        }
    }
    let mut resp_mean = vec![0.0; n_resp];
    for (r, resp) in responses.iter().enumerate() {
        resp_mean[r] = crate::stats::mean(resp);
    }

    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    for j in 0..p {
        mean[j] = f_sum[j] * inv_n;
        let var = (f_sumsq[j] * inv_n - mean[j] * mean[j]).max(0.0);
        let sd = var.sqrt();
        if sd > SD_FLOOR * (1.0 + mean[j].abs()) {
            scale[j] = sd;
            kept.push(j);
        }
    }
    let q = kept.len();
    let dropped = p - q;

    // Intercept-only shortcut: every feature is constant across the sample.
    if q == 0 {
        let fitted = resp_mean
            .iter()
            .map(|&m| vec![m; n])
            .collect::<Vec<_>>();
        let rms = if n_resp > 0 {
            let ss: f64 = responses[0]
                .iter()
                .map(|y| (y - resp_mean[0]) * (y - resp_mean[0]))
                .sum();
            (ss * inv_n).sqrt()
        } else {
            0.0
        };
        return Ok((
            fitted,
            FitDiagnostics {
                condition: 1.0,
                ridge: 0.0,
                dropped,
                residual_rms: rms,
            },
        ));
    }

    // Pass 2: standardized Gram (lower triangle) and cross moments with the
    // centered responses, again combined in chunk order.
    let tri = q * (q + 1) / 2;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = states
        .par_chunks(CHUNK_ROWS * d)
        .enumerate()
        .map(|(ci, rows)| {
            let row0 = ci * CHUNK_ROWS;
            let mut feat = vec![0.0; p];
            let mut z = vec![0.0; q];
            let mut gram = vec![0.0; tri];
            let mut cross = vec![0.0; q * n_resp];
            for (i, x) in rows.chunks_exact(d).enumerate() {
                plan.eval_features(x, domain, &mut feat);
                for (jj, &j) in kept.iter().enumerate() {
                    z[jj] = (feat[j] - mean[j]) / scale[j];
                }
                let mut t = 0;
                for a in 0..q {
                    for b in 0..=a {
                        gram[t] += z[a] * z[b];
                        t += 1;
                    }
                }
                for (r, resp) in responses.iter().enumerate() {
                    let yc = resp[row0 + i] - resp_mean[r];
                    for (jj, zv) in z.iter().enumerate() {
                        cross[r * q + jj] += zv * yc;
                    }
                }
            }
            (gram, cross)
        })
        .collect();
    let mut gram = vec![0.0; tri];
    let mut cross = vec![0.0; q * n_resp];
    for (g, c) in &partials {
        for (acc, v) in gram.iter_mut().zip(g) {
            *acc += v;
        }
        for (acc, v) in cross.iter_mut().zip(c) {
            *acc += v;
        }
    }
    for v in gram.iter_mut() {
        *v *= inv_n;
    }
    for v in cross.iter_mut() {
        *v *= inv_n;
    }

    // Cholesky with ridge escalation.
    let mut ridge = 0.0;
    let mut factor = None;
    let mut condition = f64::INFINITY;
    for attempt in 0..5 {
        let mut g = lower_from_tri(&gram, q);
        if ridge > 0.0 {
            for j in 0..q {
                g[j * q + j] += ridge;
            }
        }
        match cholesky_in_place(&mut g, q) {
            Some(cond) => {
                condition = cond;
                if cond <= COND_LIMIT || attempt == 4 {
                    factor = Some(g);
                    break;
                }
            }
            None => {}
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
    }
    let factor = factor.ok_or_else(|| {
        Error::Regression(format!(
            "normal equations singular beyond ridge fallback (q = {q}, ridge {ridge})"
        ))
    })?;
    if condition > COND_LIMIT && ridge > 0.0 {
        // Ridge capped out but the factorization succeeded; proceed, the
        // diagnostics expose the conditioning.
    }

    // Coefficients per response in standardized space.
    let mut coefs = vec![0.0; q * n_resp];
    for r in 0..n_resp {
        let rhs = &cross[r * q..(r + 1) * q];
        let beta = cholesky_solve(&factor, q, rhs);
        coefs[r * q..(r + 1) * q].copy_from_slice(&beta);
    }

    // Pass 3: fitted values (pure map, any order).
    let mut fitted: Vec<Vec<f64>> = (0..n_resp).map(|_| vec![0.0; n]).collect();
    {
        let mut columns: Vec<&mut [f64]> = fitted.iter_mut().map(|v| v.as_mut_slice()).collect();
        let chunks: Vec<Vec<&mut [f64]>> = split_columns(&mut columns, n);
        states
            .par_chunks(CHUNK_ROWS * d)
            .zip(chunks)
            .for_each(|(rows, mut outs)| {
                let mut feat = vec![0.0; p];
                for (i, x) in rows.chunks_exact(d).enumerate() {
                    plan.eval_features(x, domain, &mut feat);
                    for r in 0..n_resp {
                        let mut acc = resp_mean[r];
                        for (jj, &j) in kept.iter().enumerate() {
                            acc += coefs[r * q + jj] * (feat[j] - mean[j]) / scale[j];
                        }
                        outs[r][i] = acc;
                    }
                }
            });
    }

    let residual_rms = if n_resp > 0 {
        let ss: f64 = responses[0]
            .iter()
            .zip(&fitted[0])
            .map(|(y, yh)| (y - yh) * (y - yh))
            .sum();
        (ss * inv_n).sqrt()
    } else {
        0.0
    };

    Ok((
        fitted,
        FitDiagnostics {
            condition,
            ridge,
            dropped,
            residual_rms,
        },
    ))
}

/// Split each fitted-value column into per-chunk windows so the fill loop
/// can run in parallel over chunks.
fn split_columns<'a>(columns: &mut [&'a mut [f64]], n: usize) -> Vec<Vec<&'a mut [f64]>> {
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let mut out: Vec<Vec<&'a mut [f64]>> = (0..n_chunks).map(|_| Vec::new()).collect();
    for col in columns.iter_mut() {
        let owned = std::mem::take(col);
        for (ci, piece) in owned.chunks_mut(CHUNK_ROWS).enumerate() {
            out[ci].push(piece);
        }
    }
    out
}

fn lower_from_tri(tri: &[f64], q: usize) -> Vec<f64> {
    let mut g = vec![0.0; q * q];
    let mut t = 0;
    for a in 0..q {
        for b in 0..=a {
            g[a * q + b] = tri[t];
            g[b * q + a] = tri[t];
            t += 1;
        }
    }
    g
}

/// In-place lower Cholesky; returns the squared pivot-ratio condition
/// estimate, or None when a pivot loses positivity.
fn cholesky_in_place(g: &mut [f64], q: usize) -> Option<f64> {
    let mut min_piv = f64::INFINITY;
    let mut max_piv = 0.0f64;
    for j in 0..q {
        let mut diag = g[j * q + j];
        for k in 0..j {
            diag -= g[j * q + k] * g[j * q + k];
        }
        if diag <= 0.0 {
            return None;
        }
        let l = diag.sqrt();
        g[j * q + j] = l;
        min_piv = min_piv.min(l);
        max_piv = max_piv.max(l);
        for i in j + 1..q {
            let mut v = g[i * q + j];
            for k in 0..j {
                v -= g[i * q + k] * g[j * q + k];
            }
            g[i * q + j] = v / l;
        }
    }
    let ratio = max_piv / min_piv;
    Some(ratio * ratio)
}

fn cholesky_solve(l: &[f64], q: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..q {
        for k in 0..i {
            y[i] -= l[i * q + k] * y[k];
        }
        y[i] /= l[i * q + i];
    }
    for i in (0..q).rev() {
        for k in i + 1..q {
            y[i] -= l[k * q + i] * y[k];
        }
        y[i] /= l[i * q + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> DomainSpec {
        DomainSpec::interval(0.0, 1.0).unwrap()
    }

    #[test]
    fn graded_monomials_enumerate_correctly() {
        let plan = RegressionPlan::new(3, 1);
        assert_eq!(plan.exponents, vec![vec![1], vec![2], vec![3]]);
        assert_eq!(plan.n_features(), 4); // + level

        let plan = RegressionPlan::new(2, 2);
        assert_eq!(
            plan.exponents,
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(plan.n_features(), 6);

        let plan = RegressionPlan::new(0, 1);
        assert_eq!(plan.n_features(), 0);
        assert!(!plan.include_level);
    }

    #[test]
    fn recovers_polynomial_exactly() {
        let domain = interval();
        let plan = RegressionPlan::new(2, 1);
        let n = 400;
        let states: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * i as f64 / n as f64).collect();
        let target = |x: f64| 2.0 + 3.0 * x - 1.5 * x * x;
        let response: Vec<f64> = states.iter().map(|&x| target(x)).collect();
        let (fitted, diag) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        for (f, y) in fitted[0].iter().zip(&response) {
            assert!((f - y).abs() < 1e-10, "fit {f} vs {y}");
        }
        assert_eq!(diag.ridge, 0.0);
        assert_eq!(diag.dropped, 0);
        assert!(diag.residual_rms < 1e-10);
        assert!(diag.condition >= 1.0 && diag.condition < 1e6);
    }

    #[test]
    fn identical_states_fall_back_to_mean() {
        let domain = interval();
        let plan = RegressionPlan::new(3, 1);
        let states = vec![0.4; 50];
        let response: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let (fitted, diag) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        let mean = 49.0 / 2.0;
        for f in &fitted[0] {
            assert_eq!(*f, mean);
        }
        assert_eq!(diag.dropped, plan.n_features());
        assert_eq!(diag.condition, 1.0);
    }

    #[test]
    fn multi_response_matches_separate_fits() {
        let domain = interval();
        let plan = RegressionPlan::new(2, 1);
        let n = 300;
        let states: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin().abs() * 0.9).collect();
        let ya: Vec<f64> = states.iter().map(|&x| x * x + 0.3).collect();
        let yb: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(i, &x)| x + ((i * 7919) % 13) as f64 * 0.01)
            .collect();
        let (joint, _) = fit_conditional(&plan, &domain, &states, &[&ya, &yb]).unwrap();
        let (fa, _) = fit_conditional(&plan, &domain, &states, &[&ya]).unwrap();
        let (fb, _) = fit_conditional(&plan, &domain, &states, &[&yb]).unwrap();
        assert_eq!(joint[0], fa[0]);
        assert_eq!(joint[1], fb[0]);
    }

    #[test]
    fn collinear_columns_trigger_ridge_not_failure() {
        // States in {0.2, 0.8} only: x^2 and x^3 are affine in x, so the
        // standardized columns are exactly collinear.
        let domain = interval();
        let plan = RegressionPlan::new(3, 1);
        let states: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let response: Vec<f64> = states.iter().map(|&x| 1.0 + 2.0 * x).collect();
        let (fitted, diag) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        assert!(diag.ridge > 0.0, "expected ridge fallback, got {diag:?}");
        for (f, y) in fitted[0].iter().zip(&response) {
            assert!((f - y).abs() < 1e-5, "fit {f} vs {y}");
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let domain = interval();
        let plan = RegressionPlan::new(3, 1);
        let n = 10_000;
        let states: Vec<f64> = (0..n)
            .map(|i| ((i as u64 * 2654435761) % 1000) as f64 / 1000.0)
            .collect();
        let response: Vec<f64> = states.iter().map(|&x| (3.0 * x).sin()).collect();
        let (a, da) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        let (b, db) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(da, db);
    }

    #[test]
    fn shape_errors_are_reported() {
        let domain = interval();
        let plan = RegressionPlan::new(1, 1);
        let states = vec![0.1, 0.2, 0.3];
        let short = vec![1.0, 2.0];
        assert!(matches!(
            fit_conditional(&plan, &domain, &states, &[&short]),
            Err(Error::Shape(_))
        ));
        let resp = vec![1.0, 2.0, 3.0];
        assert!(fit_conditional(&plan, &domain, &[], &[&resp]).is_err());
    }

    #[test]
    fn mean_is_preserved_by_the_projection() {
        // With an intercept in the model, fitted values average to the
        // response average; the backward recursion relies on this to keep
        // driverless problems unbiased.
        let domain = interval();
        let plan = RegressionPlan::new(3, 1);
        let n = 5000;
        let states: Vec<f64> = (0..n).map(|i| ((i * 48271) % 10_000) as f64 / 10_000.0).collect();
        let response: Vec<f64> =
            states.iter().enumerate().map(|(i, &x)| x.powi(4) + ((i % 7) as f64)).collect();
        let (fitted, _) = fit_conditional(&plan, &domain, &states, &[&response]).unwrap();
        let m_resp = crate::stats::mean(&response);
        let m_fit = crate::stats::mean(&fitted[0]);
        assert!((m_resp - m_fit).abs() < 1e-12);
    }
}
