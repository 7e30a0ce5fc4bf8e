//! Sampled validation of the structural hypotheses a problem instance is
//! supposed to satisfy.
//!
//! Monotonicity, Lipschitz and growth properties of user-supplied
//! coefficients cannot be decided symbolically, so they are probed on
//! deterministic quasi-random samples of `[0, T] x closure(D)` and the
//! configured `y`/`z` boxes. Violations are reported, never raised: a report
//! entry with `passed = false` tells the caller which hypothesis broke and
//! by how much, and the caller decides whether to proceed.

use crate::error::Result;
use crate::rng::{tag, CounterRng};

use super::{ProblemSpec, ValidationRanges};

/// Quotient comparisons allow this much slack over the declared constant to
/// absorb floating-point noise in the sampled differences.
const QUOTIENT_TOL: f64 = 1e-7;

/// Pairs closer than this (in the relevant argument) are skipped when
/// forming difference quotients.
const PAIR_GAP: f64 = 1e-6;

/// One validated property: the worst sampled value against its bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed quotient, defect, or margin (check-specific).
    pub observed: f64,
    /// The bound the observation is compared against.
    pub bound: f64,
    pub detail: String,
}

impl CheckResult {
    fn quotient(name: &'static str, observed: f64, bound: f64, what: &str) -> Self {
        let passed = observed.is_finite() && observed <= bound + QUOTIENT_TOL;
        CheckResult {
            name,
            passed,
            observed,
            bound,
            detail: format!("worst sampled {what}: {observed:.6e} (bound {bound:.6e})"),
        }
    }
}

/// Outcome of [`validate_assumptions`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// Sampled bound on `max(|h|, |phi(h)|, |psi(h)|)` over the closure.
    pub terminal_bound: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

struct Sampler<'a> {
    spec: &'a ProblemSpec,
    rng: CounterRng,
    ranges: ValidationRanges,
}

impl<'a> Sampler<'a> {
    fn new(spec: &'a ProblemSpec, seed: u64) -> Self {
        Sampler {
            spec,
            rng: CounterRng::new(seed, tag::VALIDATE),
            ranges: spec.ranges,
        }
    }

    fn t(&self, i: u64, step: u64) -> f64 {
        self.spec.horizon * self.rng.uniform(i, step, 0)
    }

    fn y(&self, i: u64, step: u64) -> f64 {
        let r = self.ranges;
        r.y_min + self.rng.uniform(i, step, 1) * (r.y_max - r.y_min)
    }

    fn z(&self, i: u64, step: u64) -> Vec<f64> {
        let r = self.ranges;
        (0..self.spec.domain.dim())
            .map(|c| r.z_min + self.rng.uniform(i, step, 2 + c as u64) * (r.z_max - r.z_min))
            .collect()
    }

    fn interior(&self, i: u64) -> Vec<f64> {
        self.spec.domain.sample_interior(&self.rng, i)
    }

    fn boundary(&self, i: u64) -> Vec<f64> {
        self.spec.domain.sample_boundary(&self.rng, i)
    }

    /// Closure sample: boundary every fourth draw, interior otherwise.
    fn closure(&self, i: u64) -> Vec<f64> {
        if i % 4 == 3 {
            self.boundary(i)
        } else {
            self.interior(i)
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Probe the standing hypotheses of a problem instance on `n_samples`
/// quasi-random points and report per-property pass/fail entries.
///
/// Checked properties, with the constants they are compared against:
///
/// - `coefficients_finite`: every coefficient evaluates to a finite value on
///   the sample (bound is 0 violations).
/// - `lipschitz_b_sigma`: spatial difference quotient of `b` and `sigma`
///   against `lipschitz`.
/// - `f_y_monotonicity`: `(y - y')(f(..y..) - f(..y'..)) / |y - y'|^2`
///   against `alpha`.
/// - `f_z_lipschitz`: `|f(..z..) - f(..z'..)| / |z - z'|` against
///   `lipschitz`.
/// - `f_growth`: `|f(t, x, y, 0)| / (1 + |y|)` against `gamma`.
/// - `g_y_monotonicity`: same quotient for `g` against `beta`.
/// - `g_growth`: `|g(t, x, y)| / (1 + |y|)` against `gamma`.
/// - `phi_normalization`, `psi_normalization`: value 0 and a subgradient 0
///   at the origin.
/// - `terminal_in_domains`: `h` lands in both effective domains with finite
///   potential values; the sampled bound is reported.
/// - `boundary_unit_normal`: `| |grad l| - 1 |` on boundary samples, bound
///   1e-8.
/// - `weight_lambda`, `weight_mu`: the weight inequalities with their
///   margins (always true for a constructed spec; recorded for the report).
///
/// Violations never raise; they are entries with `passed = false`.
pub fn validate_assumptions(spec: &ProblemSpec, n_samples: usize, seed: u64) -> ValidationReport {
    let s = Sampler::new(spec, seed);
    let c = &spec.coeffs;
    let k = spec.constants;
    let d = spec.domain.dim();
    let n = n_samples.max(1) as u64;

    let mut checks = Vec::new();

    let mut slots_a = vec![0.0; c.slot_len()];
    let mut slots_b = vec![0.0; c.slot_len()];
    let mut buf_a = vec![0.0; d];
    let mut buf_b = vec![0.0; d];

    // Finiteness of every coefficient over the closure sample.
    let mut bad_evals = 0usize;
    let mut first_bad = String::new();
    for i in 0..n {
        let t = s.t(i, 10);
        let x = s.closure(i);
        let y = s.y(i, 11);
        let z = s.z(i, 12);
        c.load_tx(t, &x, &mut slots_a);
        slots_a[1 + d] = y;
        slots_a[2 + d..].copy_from_slice(&z);
        c.eval_b(&slots_a, &mut buf_a);
        c.eval_sigma_diag(&slots_a, &mut buf_b);
        let fv = c.eval_f(&slots_a);
        let gv = c.eval_g(&slots_a);
        let hv = c.eval_h(&x);
        let all_finite = buf_a.iter().chain(buf_b.iter()).all(|v| v.is_finite())
            && fv.is_finite()
            && gv.is_finite()
            && hv.is_finite();
        if !all_finite {
            bad_evals += 1;
            if first_bad.is_empty() {
                first_bad = format!("first at t = {t}, x = {x:?}, y = {y}");
            }
        }
    }
    checks.push(CheckResult {
        name: "coefficients_finite",
        passed: bad_evals == 0,
        observed: bad_evals as f64,
        bound: 0.0,
        detail: if bad_evals == 0 {
            "all coefficient evaluations finite on the sample".into()
        } else {
            format!("{bad_evals} non-finite evaluations; {first_bad}")
        },
    });

    // Spatial Lipschitz quotient of b and sigma.
    let mut worst = 0.0f64;
    for i in 0..n {
        let t = s.t(i, 13);
        let xa = s.closure(2 * i);
        let xb = s.closure(2 * i + 1);
        let gap = dist(&xa, &xb);
        if gap < PAIR_GAP {
            continue;
        }
        c.load_tx(t, &xa, &mut slots_a);
        c.load_tx(t, &xb, &mut slots_b);
        let mut diff = 0.0f64;
        c.eval_b(&slots_a, &mut buf_a);
        c.eval_b(&slots_b, &mut buf_b);
        diff += buf_a
            .iter()
            .zip(&buf_b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        c.eval_sigma_diag(&slots_a, &mut buf_a);
        c.eval_sigma_diag(&slots_b, &mut buf_b);
        diff += buf_a
            .iter()
            .zip(&buf_b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / gap);
    }
    checks.push(CheckResult::quotient(
        "lipschitz_b_sigma",
        worst,
        k.lipschitz,
        "spatial quotient of (b, sigma)",
    ));

    // Monotonicity of f in y (one-sided, against alpha).
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let t = s.t(i, 14);
        let x = s.closure(i);
        let ya = s.y(i, 15);
        let yb = s.y(i, 16);
        if (ya - yb).abs() < PAIR_GAP {
            continue;
        }
        let z = s.z(i, 17);
        c.load_tx(t, &x, &mut slots_a);
        slots_a[2 + d..].copy_from_slice(&z);
        slots_a[1 + d] = ya;
        let fa = c.eval_f(&slots_a);
        slots_a[1 + d] = yb;
        let fb = c.eval_f(&slots_a);
        worst = worst.max((ya - yb) * (fa - fb) / ((ya - yb) * (ya - yb)));
    }
    checks.push(CheckResult::quotient(
        "f_y_monotonicity",
        worst,
        k.alpha,
        "monotonicity quotient of f in y",
    ));

    // Lipschitz quotient of f in z.
    let mut worst = 0.0f64;
    for i in 0..n {
        let t = s.t(i, 18);
        let x = s.closure(i);
        let y = s.y(i, 19);
        let za = s.z(i, 20);
        let zb = s.z(i, 21);
        let gap = dist(&za, &zb);
        if gap < PAIR_GAP {
            continue;
        }
        c.load_tx(t, &x, &mut slots_a);
        slots_a[1 + d] = y;
        slots_a[2 + d..].copy_from_slice(&za);
        let fa = c.eval_f(&slots_a);
        slots_a[2 + d..].copy_from_slice(&zb);
        let fb = c.eval_f(&slots_a);
        worst = worst.max((fa - fb).abs() / gap);
    }
    checks.push(CheckResult::quotient(
        "f_z_lipschitz",
        worst,
        k.lipschitz,
        "z-quotient of f",
    ));

    // Growth of f at z = 0 and of g, both against gamma.
    let mut worst_f = 0.0f64;
    let mut worst_g = 0.0f64;
    for i in 0..n {
        let t = s.t(i, 22);
        let y = s.y(i, 23);
        let x = s.closure(i);
        c.load_tx(t, &x, &mut slots_a);
        slots_a[1 + d] = y;
        worst_f = worst_f.max(c.eval_f(&slots_a).abs() / (1.0 + y.abs()));
        let xb = s.boundary(i);
        c.load_tx(t, &xb, &mut slots_a);
        slots_a[1 + d] = y;
        worst_g = worst_g.max(c.eval_g(&slots_a).abs() / (1.0 + y.abs()));
    }
    checks.push(CheckResult::quotient(
        "f_growth",
        worst_f,
        k.gamma,
        "growth quotient |f(t,x,y,0)| / (1 + |y|)",
    ));

    // Monotonicity of g in y (against beta).
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let t = s.t(i, 24);
        let x = s.boundary(i);
        let ya = s.y(i, 25);
        let yb = s.y(i, 26);
        if (ya - yb).abs() < PAIR_GAP {
            continue;
        }
        c.load_tx(t, &x, &mut slots_a);
        slots_a[1 + d] = ya;
        let ga = c.eval_g(&slots_a);
        slots_a[1 + d] = yb;
        let gb = c.eval_g(&slots_a);
        worst = worst.max((ya - yb) * (ga - gb) / ((ya - yb) * (ya - yb)));
    }
    checks.push(CheckResult::quotient(
        "g_y_monotonicity",
        worst,
        k.beta,
        "monotonicity quotient of g in y",
    ));
    checks.push(CheckResult::quotient(
        "g_growth",
        worst_g,
        k.gamma,
        "growth quotient |g| / (1 + |y|)",
    ));

    // Normalization of the potentials at the origin.
    for (name, pot) in [("phi_normalization", &spec.phi), ("psi_normalization", &spec.psi)] {
        let value = pot.evaluate(0.0);
        let sub_ok = match pot.one_sided_derivatives(0.0) {
            Ok((lo, hi)) => lo <= 0.0 && 0.0 <= hi,
            Err(_) => false,
        };
        let passed = value == 0.0 && sub_ok;
        checks.push(CheckResult {
            name,
            passed,
            observed: value,
            bound: 0.0,
            detail: if passed {
                "value 0 and a zero subgradient at the origin".into()
            } else {
                format!("value {value} at the origin, zero-subgradient check {sub_ok}")
            },
        });
    }

    // Terminal data inside both effective domains, with the sampled bound.
    let mut bound: f64 = 0.0;
    let mut violations = 0usize;
    for i in 0..n {
        let x = s.closure(i);
        let hv = c.eval_h(&x);
        let pv = spec.phi.evaluate(hv);
        let qv = spec.psi.evaluate(hv);
        if !(hv.is_finite() && pv.is_finite() && qv.is_finite()) {
            violations += 1;
            continue;
        }
        bound = bound.max(hv.abs()).max(pv.abs()).max(qv.abs());
    }
    checks.push(CheckResult {
        name: "terminal_in_domains",
        passed: violations == 0,
        observed: bound,
        bound: f64::INFINITY,
        detail: if violations == 0 {
            format!("terminal data admissible; sampled bound {bound:.6e}")
        } else {
            format!("{violations} samples with h outside an effective domain")
        },
    });

    // Unit normal on the boundary.
    let mut worst = 0.0f64;
    let mut grad = vec![0.0; d];
    for i in 0..n {
        let x = s.boundary(i);
        spec.domain.gradient(&x, &mut grad);
        worst = worst.max((norm(&grad) - 1.0).abs());
    }
    checks.push(CheckResult {
        name: "boundary_unit_normal",
        passed: worst <= 1e-8,
        observed: worst,
        bound: 1e-8,
        detail: format!("worst | |grad l| - 1 | on boundary samples: {worst:.3e}"),
    });

    // Weight inequalities (enforced at construction; recorded with margins).
    let lambda_floor = 2.0 * k.alpha + 2.0 * k.lipschitz * k.lipschitz + 1.0;
    checks.push(CheckResult {
        name: "weight_lambda",
        passed: k.lambda > lambda_floor,
        observed: k.lambda,
        bound: lambda_floor,
        detail: format!("lambda {} vs floor {}", k.lambda, lambda_floor),
    });
    let mu_floor = 2.0 * k.beta + 1.0;
    checks.push(CheckResult {
        name: "weight_mu",
        passed: k.mu > mu_floor,
        observed: k.mu,
        bound: mu_floor,
        detail: format!("mu {} vs floor {}", k.mu, mu_floor),
    });

    ValidationReport {
        checks,
        terminal_bound: bound,
    }
}

/// One compatibility condition at one penalization level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompatCondition {
    pub name: &'static str,
    /// Worst violation margin over the sample; nonpositive means the
    /// condition held everywhere.
    pub worst_margin: f64,
    pub passed: bool,
}

/// Compatibility results for one penalization level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompatEntry {
    pub eps: f64,
    pub conditions: Vec<CompatCondition>,
}

/// Outcome of [`check_compatibility`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompatReport {
    pub entries: Vec<CompatEntry>,
}

impl CompatReport {
    pub fn all_passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.conditions.iter().all(|c| c.passed))
    }
}

/// Check the coupling conditions between the two Yosida regularizations and
/// the drivers, for each requested penalization level.
///
/// Writing `u = grad phi_eps(y)` and `v = grad psi_eps(y)`, the conditions
/// sampled over `(t, x, y, z)` are
///
/// - `yosida_gradient_product`: `u v >= 0`,
/// - `interior_flux_vs_g`: `u g(t, x, y) <= max(v g(t, x, y), 0)` on
///   boundary points,
/// - `boundary_flux_vs_f`: `v f(t, x, y, z) <= max(u f(t, x, y, z), 0)` on
///   closure points.
///
/// The worst margin (left side minus right side; positive = violated) is
/// reported per condition and level.
pub fn check_compatibility(
    spec: &ProblemSpec,
    eps_list: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CompatReport> {
    for &eps in eps_list {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(crate::error::Error::Config(format!(
                "penalization levels must be positive, got {eps}"
            )));
        }
    }
    let s = Sampler::new(spec, seed);
    let c = &spec.coeffs;
    let d = spec.domain.dim();
    let n = n_samples.max(1) as u64;
    let tol = 1e-9;

    let mut slots = vec![0.0; c.slot_len()];
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut worst_prod = f64::NEG_INFINITY;
        let mut worst_g = f64::NEG_INFINITY;
        let mut worst_f = f64::NEG_INFINITY;
        for i in 0..n {
            let t = s.t(i, 30);
            let y = s.y(i, 31);
            let z = s.z(i, 32);
            let u = spec.phi.yosida(eps, y);
            let v = spec.psi.yosida(eps, y);
            worst_prod = worst_prod.max(-(u * v));

            let xb = s.boundary(i);
            c.load_tx(t, &xb, &mut slots);
            slots[1 + d] = y;
            let gv = c.eval_g(&slots);
            worst_g = worst_g.max(u * gv - (v * gv).max(0.0));

            let xc = s.closure(i);
            c.load_tx(t, &xc, &mut slots);
            slots[1 + d] = y;
            slots[2 + d..].copy_from_slice(&z);
            let fv = c.eval_f(&slots);
            worst_f = worst_f.max(v * fv - (u * fv).max(0.0));
        }
        entries.push(CompatEntry {
            eps,
            conditions: vec![
                CompatCondition {
                    name: "yosida_gradient_product",
                    worst_margin: worst_prod,
                    passed: worst_prod <= tol,
                },
                CompatCondition {
                    name: "interior_flux_vs_g",
                    worst_margin: worst_g,
                    passed: worst_g <= tol,
                },
                CompatCondition {
                    name: "boundary_flux_vs_f",
                    worst_margin: worst_f,
                    passed: worst_f <= tol,
                },
            ],
        });
    }
    Ok(CompatReport { entries })
}

/// Outcome of [`uniqueness_hypotheses_check`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct UniquenessReport {
    /// `g` nonincreasing in `y`: worst monotonicity quotient, must be <= 0.
    pub g_decreasing: CheckResult,
    /// Empirical sup of `|f(t,x,y,p) - f(t,x',y,p)| / (|x - x'| (1 + |p|))`;
    /// informational, reported as passed when finite.
    pub f_x_modulus: CheckResult,
}

impl UniquenessReport {
    pub fn all_passed(&self) -> bool {
        self.g_decreasing.passed && self.f_x_modulus.passed
    }
}

/// Probe the extra hypotheses under which the limit solution is unique:
/// `g` nonincreasing in `y`, and a finite spatial modulus of continuity for
/// `f` of the form `m(|x - x'| (1 + |p|))`.
pub fn uniqueness_hypotheses_check(
    spec: &ProblemSpec,
    n_samples: usize,
    seed: u64,
) -> UniquenessReport {
    let s = Sampler::new(spec, seed);
    let c = &spec.coeffs;
    let d = spec.domain.dim();
    let n = n_samples.max(1) as u64;
    let mut slots = vec![0.0; c.slot_len()];

    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let t = s.t(i, 40);
        let x = s.boundary(i);
        let ya = s.y(i, 41);
        let yb = s.y(i, 42);
        if (ya - yb).abs() < PAIR_GAP {
            continue;
        }
        c.load_tx(t, &x, &mut slots);
        slots[1 + d] = ya;
        let ga = c.eval_g(&slots);
        slots[1 + d] = yb;
        let gb = c.eval_g(&slots);
        worst = worst.max((ya - yb) * (ga - gb) / ((ya - yb) * (ya - yb)));
    }
    let g_decreasing = CheckResult::quotient(
        "g_decreasing_in_y",
        worst,
        0.0,
        "monotonicity quotient of g in y",
    );

    let mut sup = 0.0f64;
    let mut slots_b = vec![0.0; c.slot_len()];
    for i in 0..n {
        let t = s.t(i, 43);
        let xa = s.closure(2 * i);
        let xb = s.closure(2 * i + 1);
        let gap = dist(&xa, &xb);
        if gap < PAIR_GAP {
            continue;
        }
        let y = s.y(i, 44);
        let z = s.z(i, 45);
        c.load_tx(t, &xa, &mut slots);
        c.load_tx(t, &xb, &mut slots_b);
        for sl in [&mut slots, &mut slots_b] {
            sl[1 + d] = y;
            sl[2 + d..].copy_from_slice(&z);
        }
        let fa = c.eval_f(&slots);
        let fb = c.eval_f(&slots_b);
        sup = sup.max((fa - fb).abs() / (gap * (1.0 + norm(&z))));
    }
    let f_x_modulus = CheckResult {
        name: "f_x_modulus",
        passed: sup.is_finite(),
        observed: sup,
        bound: f64::INFINITY,
        detail: format!("empirical sup of the spatial modulus quotient: {sup:.6e}"),
    };

    UniquenessReport {
        g_decreasing,
        f_x_modulus,
    }
}
