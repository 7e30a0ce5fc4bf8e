//! Problem data: domain, coefficients, convex potentials, and structural
//! constants, bundled with validation.
//!
//! A fully specified problem consists of
//!
//! - a spatial domain `D` with a smooth level description ([`DomainSpec`]),
//! - drift `b(t, x)` and diffusion `sigma(t, x)` for the reflected forward
//!   dynamics,
//! - interior driver `f(t, x, y, z)`, boundary driver `g(t, x, y)`, and
//!   terminal/initial data `h(x)`,
//! - convex potentials `phi` (interior) and `psi` (boundary) with
//!   `phi(y) >= phi(0) = 0` and `psi(y) >= psi(0) = 0`,
//! - monotonicity/growth constants and the exponential weight parameters
//!   `lambda`, `mu` used by the norms.
//!
//! Construction runs cheap structural checks (dimensions, normalization,
//! weight inequalities, terminal data inside the effective domains). The
//! heavier sampled checks live in [`validate`].

pub mod domain;
pub mod validate;

pub use domain::DomainSpec;

use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::expr::{Compiled, VarScope};
use crate::rng::{tag, CounterRng};

/// A scalar coefficient: zero, a constant, or a compiled expression.
#[derive(Debug, Clone)]
pub enum CoeffFn {
    Zero,
    Const(f64),
    Expr(Compiled),
}

impl CoeffFn {
    pub fn is_zero(&self) -> bool {
        match self {
            CoeffFn::Zero => true,
            CoeffFn::Const(c) => *c == 0.0,
            CoeffFn::Expr(_) => false,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            CoeffFn::Zero | CoeffFn::Const(_) => true,
            CoeffFn::Expr(e) => e.is_time_independent(),
        }
    }

    /// Evaluate with the slot convention `[t, x_1..x_d, y, z_1..z_d]`.
    #[inline]
    pub fn eval(&self, slots: &[f64]) -> f64 {
        match self {
            CoeffFn::Zero => 0.0,
            CoeffFn::Const(c) => *c,
            CoeffFn::Expr(e) => e.eval(slots),
        }
    }
}

/// Diffusion coefficient shapes. Only diagonal structures are supported;
/// `Full` holds one expression per diagonal entry.
#[derive(Debug, Clone)]
pub enum SigmaCoeff {
    /// Identity matrix scaled by 1.
    Identity,
    /// `c * I`.
    ConstDiagonal(f64),
    /// One coefficient per diagonal entry, each of `(t, x)`.
    Diagonal(Vec<CoeffFn>),
}

impl SigmaCoeff {
    pub fn is_zero(&self) -> bool {
        match self {
            SigmaCoeff::Identity => false,
            SigmaCoeff::ConstDiagonal(c) => *c == 0.0,
            SigmaCoeff::Diagonal(entries) => entries.iter().all(CoeffFn::is_zero),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            SigmaCoeff::Identity | SigmaCoeff::ConstDiagonal(_) => true,
            SigmaCoeff::Diagonal(entries) => entries.iter().all(CoeffFn::is_time_independent),
        }
    }

    #[inline]
    pub fn eval_entry(&self, i: usize, slots: &[f64]) -> f64 {
        match self {
            SigmaCoeff::Identity => 1.0,
            SigmaCoeff::ConstDiagonal(c) => *c,
            SigmaCoeff::Diagonal(entries) => entries[i].eval(slots),
        }
    }
}

/// All coefficient functions of a problem, with an optional time reversal.
///
/// When `reversed_at = Some(T)`, every time-dependent coefficient is
/// evaluated at `T - t` instead of `t`. This turns the data of a problem
/// posed forward in time into the data of the associated terminal-value
/// problem on the same horizon, which is how initial-value solutions are
/// produced from the backward solver.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub dim: usize,
    pub b: Vec<CoeffFn>,
    pub sigma: SigmaCoeff,
    pub f: CoeffFn,
    pub g: CoeffFn,
    pub h: CoeffFn,
    pub reversed_at: Option<f64>,
}

impl Coefficients {
    /// Slot layout length for this dimension: `[t, x.., y, z..]`.
    pub fn slot_len(&self) -> usize {
        2 + 2 * self.dim
    }

    #[inline]
    fn clock(&self, t: f64) -> f64 {
        match self.reversed_at {
            Some(horizon) => horizon - t,
            None => t,
        }
    }

    /// Return a copy with all coefficients read at `horizon - t`.
    pub fn reversed(&self, horizon: f64) -> Self {
        let mut c = self.clone();
        c.reversed_at = Some(horizon);
        c
    }

    /// Fill `slots` with `[clock(t), x..]`, zeroing the `y`/`z` tail.
    #[inline]
    pub fn load_tx(&self, t: f64, x: &[f64], slots: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(slots.len(), self.slot_len());
        slots[0] = self.clock(t);
        slots[1..1 + self.dim].copy_from_slice(x);
        for s in slots[1 + self.dim..].iter_mut() {
            *s = 0.0;
        }
    }

    /// Drift vector at `(t, x)`, written into `out`.
    pub fn eval_b(&self, slots: &[f64], out: &mut [f64]) {
        for (o, bi) in out.iter_mut().zip(&self.b) {
            *o = bi.eval(slots);
        }
    }

    /// Diagonal of the diffusion matrix at `(t, x)`, written into `out`.
    pub fn eval_sigma_diag(&self, slots: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.sigma.eval_entry(i, slots);
        }
    }

    /// Interior driver `f(t, x, y, z)`; `slots` must carry all four groups.
    #[inline]
    pub fn eval_f(&self, slots: &[f64]) -> f64 {
        self.f.eval(slots)
    }

    /// Boundary driver `g(t, x, y)`; the `z` tail of `slots` is ignored by
    /// construction (scope excludes it).
    #[inline]
    pub fn eval_g(&self, slots: &[f64]) -> f64 {
        self.g.eval(slots)
    }

    /// Terminal/initial data `h(x)`.
    pub fn eval_h(&self, x: &[f64]) -> f64 {
        let mut slots = vec![0.0; self.slot_len()];
        slots[1..1 + self.dim].copy_from_slice(x);
        self.h.eval(&slots)
    }
}

/// Monotonicity/growth constants and weight parameters.
///
/// - `alpha`: one-sided monotonicity constant of `y -> f(t, x, y, z)`,
///   `(f(y) - f(y')) (y - y') <= alpha |y - y'|^2`.
/// - `beta`: one-sided monotonicity constant of `y -> g(t, x, y)`.
/// - `lipschitz`: common Lipschitz constant, bounding both the spatial
///   quotients of `b` and `sigma` and the `z`-quotient of `f`.
/// - `gamma`: growth bound, `|f(t, x, y, 0)| + |g(t, x, y)| <=
///   gamma (1 + |y|)` on bounded sets (recorded, sampled by validators).
/// - `lambda`, `mu`: exponents of the weight `exp(lambda t + mu A_t)` used
///   by the error analysis. They must dominate the drift constants:
///   `lambda > 2 alpha + 2 lipschitz^2 + 1` and `mu > 2 beta + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl AssumptionConstants {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        lipschitz: f64,
        lambda: f64,
        mu: f64,
    ) -> Result<Self> {
        let c = AssumptionConstants {
            alpha,
            beta,
            gamma,
            lipschitz,
            lambda,
            mu,
        };
        c.validate()?;
        Ok(c)
    }

    /// Smallest admissible weights with a margin of 0.5.
    pub fn default_weights(alpha: f64, beta: f64, gamma: f64, lipschitz: f64) -> Result<Self> {
        let lambda = 2.0 * alpha + 2.0 * lipschitz * lipschitz + 1.5;
        let mu = 2.0 * beta + 1.5;
        Self::new(alpha, beta, gamma, lipschitz, lambda, mu)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lipschitz", self.lipschitz),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("constant {name} must be finite")));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be nonnegative".into()));
        }
        if self.lipschitz < 0.0 {
            return Err(Error::Config("lipschitz must be nonnegative".into()));
        }
        let lambda_floor = 2.0 * self.alpha + 2.0 * self.lipschitz * self.lipschitz + 1.0;
        if self.lambda <= lambda_floor {
            return Err(Error::Config(format!(
                "lambda = {} must exceed 2 alpha + 2 lipschitz^2 + 1 = {}",
                self.lambda, lambda_floor
            )));
        }
        let mu_floor = 2.0 * self.beta + 1.0;
        if self.mu <= mu_floor {
            return Err(Error::Config(format!(
                "mu = {} must exceed 2 beta + 1 = {}",
                self.mu, mu_floor
            )));
        }
        Ok(())
    }
}

/// Sampling boxes used by the sampled validators for the `y` and `z`
/// arguments of the drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationRanges {
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Number of sampled probe points per check.
    pub samples: usize,
}

impl Default for ValidationRanges {
    fn default() -> Self {
        ValidationRanges {
            y_min: -10.0,
            y_max: 10.0,
            z_min: -10.0,
            z_max: 10.0,
            samples: 400,
        }
    }
}

/// A complete, structurally checked problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub coeffs: Coefficients,
    pub phi: ConvexFunction,
    pub psi: ConvexFunction,
    pub constants: AssumptionConstants,
    pub horizon: f64,
    pub ranges: ValidationRanges,
    /// Sampled bound on `|h|` over the closed domain, recorded at
    /// construction and reused by a-priori bound reports.
    pub terminal_bound: f64,
}

impl ProblemSpec {
    /// Scopes used when compiling coefficient expressions.
    pub fn scopes() -> (VarScope, VarScope, VarScope, VarScope) {
        (
            VarScope::time_space(),   // b, sigma
            VarScope::full(),         // f
            VarScope::time_space_y(), // g
            VarScope::space_only(),   // h
        )
    }

    pub fn new(
        domain: DomainSpec,
        coeffs: Coefficients,
        phi: ConvexFunction,
        psi: ConvexFunction,
        constants: AssumptionConstants,
        horizon: f64,
        ranges: ValidationRanges,
    ) -> Result<Self> {
        domain.validate()?;
        phi.validate()?;
        psi.validate()?;
        constants.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let d = domain.dim();
        if coeffs.dim != d {
            return Err(Error::Config(format!(
                "coefficient dimension {} does not match domain dimension {d}",
                coeffs.dim
            )));
        }
        if coeffs.b.len() != d {
            return Err(Error::Config(format!(
                "drift has {} components, expected {d}",
                coeffs.b.len()
            )));
        }
        if let SigmaCoeff::Diagonal(entries) = &coeffs.sigma {
            if entries.len() != d {
                return Err(Error::Config(format!(
                    "diffusion diagonal has {} entries, expected {d}",
                    entries.len()
                )));
            }
        }
        if ranges.samples == 0 {
            return Err(Error::Config("validation sample count must be positive".into()));
        }
        if !(ranges.y_min < ranges.y_max) || !(ranges.z_min < ranges.z_max) {
            return Err(Error::Config("validation ranges must be nonempty".into()));
        }

        // Terminal data must take values where both potentials are finite:
        // the backward dynamics start from h(X_T) and the resolvents only
        // move values toward the effective domains, never into them from
        // infinite values.
        let rng = CounterRng::new(0, tag::VALIDATE);
        let mut bound: f64 = 0.0;
        let probes = ranges.samples.max(64);
        for i in 0..probes {
            let x = if i % 4 == 3 {
                domain.sample_boundary(&rng, i as u64)
            } else {
                domain.sample_interior(&rng, i as u64)
            };
            let hv = coeffs.eval_h(&x);
            if !hv.is_finite() {
                return Err(Error::DomainViolation(format!(
                    "terminal data is not finite at x = {x:?}"
                )));
            }
            if !phi.domain_contains(hv) {
                return Err(Error::DomainViolation(format!(
                    "terminal value h({x:?}) = {hv} lies outside the effective \
                     domain of the interior potential"
                )));
            }
            if !psi.domain_contains(hv) {
                return Err(Error::DomainViolation(format!(
                    "terminal value h({x:?}) = {hv} lies outside the effective \
                     domain of the boundary potential"
                )));
            }
            bound = bound.max(hv.abs());
        }

        Ok(ProblemSpec {
            domain,
            coeffs,
            phi,
            psi,
            constants,
            horizon,
            ranges,
            terminal_bound: bound,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn compile(src: &str, dim: usize, scope: VarScope) -> CoeffFn {
        CoeffFn::Expr(parse_expression(src).unwrap().compile(dim, scope).unwrap())
    }

    fn basic_coeffs(dim: usize) -> Coefficients {
        Coefficients {
            dim,
            b: vec![CoeffFn::Zero; dim],
            sigma: SigmaCoeff::Identity,
            f: CoeffFn::Zero,
            g: CoeffFn::Zero,
            h: CoeffFn::Const(0.5),
            reversed_at: None,
        }
    }

    #[test]
    fn time_reversal_flips_the_clock() {
        let mut c = basic_coeffs(1);
        c.b = vec![compile("t", 1, VarScope::time_space())];
        let mut slots = vec![0.0; c.slot_len()];
        c.load_tx(0.25, &[0.0], &mut slots);
        let mut out = [0.0];
        c.eval_b(&slots, &mut out);
        assert_eq!(out[0], 0.25);

        let r = c.reversed(1.0);
        r.load_tx(0.25, &[0.0], &mut slots);
        r.eval_b(&slots, &mut out);
        assert_eq!(out[0], 0.75);
        // Terminal data has no clock to flip.
        assert_eq!(r.eval_h(&[0.0]), 0.5);
    }

    #[test]
    fn constants_enforce_weight_inequalities() {
        // alpha = 1, L = 2: lambda floor = 2 + 8 + 1 = 11.
        assert!(AssumptionConstants::new(1.0, 0.0, 1.0, 2.0, 11.0, 1.5).is_err());
        assert!(AssumptionConstants::new(1.0, 0.0, 1.0, 2.0, 11.5, 1.0).is_err());
        let c = AssumptionConstants::new(1.0, 0.0, 1.0, 2.0, 11.5, 1.5).unwrap();
        assert_eq!(c.lambda, 11.5);
        let d = AssumptionConstants::default_weights(1.0, 0.0, 1.0, 2.0).unwrap();
        assert!(d.lambda > 11.0 && d.mu > 1.0);
        assert!(AssumptionConstants::new(0.0, 0.0, -1.0, 0.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn spec_rejects_terminal_data_outside_effective_domain() {
        let domain = DomainSpec::interval(0.0, 1.0).unwrap();
        let mut coeffs = basic_coeffs(1);
        coeffs.h = CoeffFn::Const(-0.5);
        let constants = AssumptionConstants::default_weights(0.0, 0.0, 1.0, 0.0).unwrap();
        // phi = indicator of [0, inf): h = -0.5 sits outside.
        let err = ProblemSpec::new(
            domain.clone(),
            coeffs.clone(),
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            constants,
            1.0,
            ValidationRanges::default(),
        );
        assert!(matches!(err, Err(Error::DomainViolation(_))));

        coeffs.h = CoeffFn::Const(0.5);
        let ok = ProblemSpec::new(
            domain,
            coeffs,
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            constants,
            1.0,
            ValidationRanges::default(),
        )
        .unwrap();
        assert_eq!(ok.terminal_bound, 0.5);
    }

    #[test]
    fn spec_rejects_dimension_mismatches() {
        let domain = DomainSpec::ball(vec![0.0, 0.0], 1.0).unwrap();
        let coeffs = basic_coeffs(1);
        let constants = AssumptionConstants::default_weights(0.0, 0.0, 1.0, 0.0).unwrap();
        let err = ProblemSpec::new(
            domain,
            coeffs,
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            constants,
            1.0,
            ValidationRanges::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn sigma_shapes_evaluate() {
        let mut c = basic_coeffs(2);
        c.b = vec![CoeffFn::Zero, CoeffFn::Zero];
        c.sigma = SigmaCoeff::Diagonal(vec![
            CoeffFn::Const(2.0),
            compile("x2", 2, VarScope::time_space()),
        ]);
        let mut slots = vec![0.0; c.slot_len()];
        c.load_tx(0.0, &[3.0, 4.0], &mut slots);
        let mut out = [0.0, 0.0];
        c.eval_sigma_diag(&slots, &mut out);
        assert_eq!(out, [2.0, 4.0]);
        assert!(!c.sigma.is_zero());
        assert!(SigmaCoeff::ConstDiagonal(0.0).is_zero());
    }
}
