//! Problem configuration files.
//!
//! Configs are JSON with a strict, versioned schema: unknown keys are
//! rejected, every coefficient is spelled out explicitly, and the only
//! optional pieces are the validation ranges and the weight exponents
//! (which have a documented rule when omitted). The goal is that a config
//! file plus a seed fully determines a run.
//!
//! Shape sketch:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "domain": { "kind": "interval", "x_left": 0.0, "x_right": 1.0 },
//!   "horizon": 1.0,
//!   "coefficients": {
//!     "b": [ { "kind": "zero" } ],
//!     "sigma": { "kind": "identity" },
//!     "f": { "kind": "constant", "value": -1.0 },
//!     "g": { "kind": "zero" },
//!     "h": { "kind": "expression", "text": "cos(3.141592653589793 * x1)" }
//!   },
//!   "phi": { "kind": "half_line_lower", "a": 0.0 },
//!   "psi": { "kind": "zero" },
//!   "constants": { "alpha": 0.0, "beta": 0.0, "gamma": 1.0, "lipschitz": 1.0 }
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, VarScope};
use crate::problem::{
    AssumptionConstants, CoeffFn, Coefficients, DomainSpec, ProblemSpec, SigmaCoeff,
    ValidationRanges,
};

/// The one schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub domain: DomainSchema,
    pub horizon: f64,
    pub coefficients: CoefficientsSchema,
    pub phi: ConvexSchema,
    pub psi: ConvexSchema,
    pub constants: ConstantsSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<RangesSchema>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSchema {
    Interval { x_left: f64, x_right: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSchema {
    pub b: Vec<CoeffSchema>,
    pub sigma: SigmaSchema,
    pub f: CoeffSchema,
    pub g: CoeffSchema,
    pub h: CoeffSchema,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoeffSchema {
    Zero,
    Constant { value: f64 },
    Expression { text: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSchema {
    Identity,
    ConstantDiagonal { value: f64 },
    Diagonal { entries: Vec<CoeffSchema> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSchema {
    Zero,
    HalfLineLower { a: f64 },
    HalfLineUpper { b: f64 },
    Interval { a: f64, b: f64 },
    Quadratic { c: f64 },
    AbsPower { c: f64, p: f64 },
    PiecewiseLinear { breakpoints: Vec<f64>, slopes: Vec<f64> },
}

/// Structural constants. `lambda` and `mu` may be omitted; the build then
/// picks `lambda = 2 alpha + 2 lipschitz^2 + 1.5` and `mu = 2 beta + 1.5`,
/// the smallest round values satisfying the required strict inequalities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSchema {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesSchema {
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub samples: usize,
}

/// Parse config text into the schema, mapping JSON syntax errors to parse
/// errors carrying a byte offset and schema violations to config errors.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    match serde_json::from_str::<ConfigFile>(text) {
        Ok(cfg) => Ok(cfg),
        Err(e) => {
            let syntactic = matches!(
                e.classify(),
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof
            );
            if syntactic {
                Err(Error::Parse {
                    offset: byte_offset(text, e.line(), e.column()),
                    found: e.to_string(),
                    expected: vec!["well-formed JSON"],
                })
            } else {
                Err(Error::Config(format!("config schema violation: {e}")))
            }
        }
    }
}

/// Translate serde_json's 1-based line/column into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

fn compile_coeff(schema: &CoeffSchema, dim: usize, scope: VarScope, what: &str) -> Result<CoeffFn> {
    match schema {
        CoeffSchema::Zero => Ok(CoeffFn::Zero),
        CoeffSchema::Constant { value } => {
            if !value.is_finite() {
                return Err(Error::Config(format!(
                    "coefficient {what} has non-finite constant {value}"
                )));
            }
            Ok(CoeffFn::Const(*value))
        }
        CoeffSchema::Expression { text } => {
            let compiled = parse_expression(text)?.compile(dim, scope)?;
            Ok(CoeffFn::Expr(compiled))
        }
    }
}

fn build_convex(schema: &ConvexSchema) -> Result<ConvexFunction> {
    match schema {
        ConvexSchema::Zero => Ok(ConvexFunction::Zero),
        ConvexSchema::HalfLineLower { a } => ConvexFunction::half_line_lower(*a),
        ConvexSchema::HalfLineUpper { b } => ConvexFunction::half_line_upper(*b),
        ConvexSchema::Interval { a, b } => ConvexFunction::interval(*a, *b),
        ConvexSchema::Quadratic { c } => ConvexFunction::quadratic(*c),
        ConvexSchema::AbsPower { c, p } => ConvexFunction::abs_power(*c, *p),
        ConvexSchema::PiecewiseLinear {
            breakpoints,
            slopes,
        } => ConvexFunction::piecewise_linear(breakpoints.clone(), slopes.clone()),
    }
}

impl ConfigFile {
    /// Build the validated problem instance this config describes.
    pub fn build(&self) -> Result<ProblemSpec> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let domain = match &self.domain {
            DomainSchema::Interval { x_left, x_right } => {
                DomainSpec::interval(*x_left, *x_right)?
            }
            DomainSchema::Ball { center, radius } => {
                DomainSpec::ball(center.clone(), *radius)?
            }
        };
        let dim = domain.dim();
        let (scope_bs, scope_f, scope_g, scope_h) = ProblemSpec::scopes();

        if self.coefficients.b.len() != dim {
            return Err(Error::Config(format!(
                "drift has {} components, domain has dimension {dim}",
                self.coefficients.b.len()
            )));
        }
        let mut b = Vec::with_capacity(dim);
        for (i, entry) in self.coefficients.b.iter().enumerate() {
            b.push(compile_coeff(entry, dim, scope_bs, &format!("b[{i}]"))?);
        }
        let sigma = match &self.coefficients.sigma {
            SigmaSchema::Identity => SigmaCoeff::Identity,
            SigmaSchema::ConstantDiagonal { value } => {
                if !value.is_finite() {
                    return Err(Error::Config(format!(
                        "sigma has non-finite constant diagonal {value}"
                    )));
                }
                SigmaCoeff::ConstDiagonal(*value)
            }
            SigmaSchema::Diagonal { entries } => {
                if entries.len() != dim {
                    return Err(Error::Config(format!(
                        "sigma diagonal has {} entries, domain has dimension {dim}",
                        entries.len()
                    )));
                }
                let mut out = Vec::with_capacity(dim);
                for (i, entry) in entries.iter().enumerate() {
                    out.push(compile_coeff(entry, dim, scope_bs, &format!("sigma[{i}]"))?);
                }
                SigmaCoeff::Diagonal(out)
            }
        };
        let f = compile_coeff(&self.coefficients.f, dim, scope_f, "f")?;
        let g = compile_coeff(&self.coefficients.g, dim, scope_g, "g")?;
        let h = compile_coeff(&self.coefficients.h, dim, scope_h, "h")?;

        let phi = build_convex(&self.phi)?;
        let psi = build_convex(&self.psi)?;

        let c = &self.constants;
        let constants = match (c.lambda, c.mu) {
            (Some(lambda), Some(mu)) => {
                AssumptionConstants::new(c.alpha, c.beta, c.gamma, c.lipschitz, lambda, mu)?
            }
            (lambda, mu) => {
                let defaults =
                    AssumptionConstants::default_weights(c.alpha, c.beta, c.gamma, c.lipschitz)?;
                AssumptionConstants::new(
                    c.alpha,
                    c.beta,
                    c.gamma,
                    c.lipschitz,
                    lambda.unwrap_or(defaults.lambda),
                    mu.unwrap_or(defaults.mu),
                )?
            }
        };

        let ranges = match &self.validation {
            Some(r) => ValidationRanges {
                y_min: r.y_min,
                y_max: r.y_max,
                z_min: r.z_min,
                z_max: r.z_max,
                samples: r.samples,
            },
            None => ValidationRanges::default(),
        };

        let coeffs = Coefficients {
            dim,
            b,
            sigma,
            f,
            g,
            h,
            reversed_at: None,
        };
        ProblemSpec::new(domain, coeffs, phi, psi, constants, self.horizon, ranges)
    }
}

/// Read and build a problem from a config file on disk.
pub fn load_problem(path: &std::path::Path) -> Result<(ConfigFile, ProblemSpec)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    let spec = cfg.build()?;
    Ok((cfg, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_json() -> String {
        r#"{
            "schema_version": 1,
            "domain": { "kind": "interval", "x_left": 0.0, "x_right": 1.0 },
            "horizon": 0.5,
            "coefficients": {
                "b": [ { "kind": "zero" } ],
                "sigma": { "kind": "identity" },
                "f": { "kind": "zero" },
                "g": { "kind": "zero" },
                "h": { "kind": "expression", "text": "cos(3.141592653589793 * x1)" }
            },
            "phi": { "kind": "zero" },
            "psi": { "kind": "zero" },
            "constants": { "alpha": 0.0, "beta": 0.0, "gamma": 1.0, "lipschitz": 1.0 }
        }"#
        .to_string()
    }

    #[test]
    fn heat_config_builds_a_problem() {
        let cfg = parse_config(&heat_json()).unwrap();
        let spec = cfg.build().unwrap();
        assert_eq!(spec.domain.dim(), 1);
        assert_eq!(spec.horizon, 0.5);
        assert!((spec.coeffs.eval_h(&[1.0]) + 1.0).abs() < 1e-15);
        assert!(spec.constants.lambda > 2.0 * 0.0 + 2.0 * 1.0 + 1.0);
        assert!(spec.constants.mu > 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected_loudly() {
        let text = heat_json().replace("\"horizon\": 0.5,", "\"horizon\": 0.5, \"paths\": 7,");
        match parse_config(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("paths"), "message: {msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_a_byte_offset() {
        let text = "{ \"schema_version\": 1, ]";
        match parse_config(text) {
            Err(e @ Error::Parse { offset, .. }) => {
                assert_eq!(offset, 23, "offset should point at the stray bracket");
                assert_eq!(e.exit_code(), 2);
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_a_config_error() {
        let text = heat_json().replace("\"schema_version\": 1", "\"schema_version\": 2");
        let cfg = parse_config(&text).unwrap();
        assert!(matches!(cfg.build(), Err(Error::Config(_))));
    }

    #[test]
    fn expression_errors_surface_with_their_class() {
        let bad_syntax = heat_json().replace("cos(3.141592653589793 * x1)", "cos(");
        let cfg = parse_config(&bad_syntax).unwrap();
        assert!(matches!(cfg.build(), Err(Error::Parse { .. })));

        let bad_scope = heat_json().replace(
            "\"g\": { \"kind\": \"zero\" }",
            "\"g\": { \"kind\": \"expression\", \"text\": \"z1\" }",
        );
        let cfg = parse_config(&bad_scope).unwrap();
        let err = cfg.build().unwrap_err();
        assert_eq!(err.exit_code(), 2, "scope violation is a config-class error");
    }

    #[test]
    fn convex_tags_and_ball_domains_build() {
        let text = r#"{
            "schema_version": 1,
            "domain": { "kind": "ball", "center": [0.0, 0.0], "radius": 1.0 },
            "horizon": 1.0,
            "coefficients": {
                "b": [ { "kind": "zero" }, { "kind": "constant", "value": 0.1 } ],
                "sigma": { "kind": "constant_diagonal", "value": 0.5 },
                "f": { "kind": "constant", "value": -1.0 },
                "g": { "kind": "zero" },
                "h": { "kind": "zero" }
            },
            "phi": { "kind": "half_line_lower", "a": 0.0 },
            "psi": { "kind": "interval", "a": -1.0, "b": 1.0 },
            "constants": { "alpha": 0.0, "beta": 0.0, "gamma": 1.0, "lipschitz": 0.5, "lambda": 3.0, "mu": 2.0 }
        }"#;
        let cfg = parse_config(text).unwrap();
        let spec = cfg.build().unwrap();
        assert_eq!(spec.domain.dim(), 2);
        assert!(matches!(spec.phi, ConvexFunction::HalfLineLower { .. }));
        assert_eq!(spec.constants.lambda, 3.0);
    }

    #[test]
    fn dimension_mismatches_are_config_errors() {
        let text = heat_json().replace(
            "\"b\": [ { \"kind\": \"zero\" } ]",
            "\"b\": [ { \"kind\": \"zero\" }, { \"kind\": \"zero\" } ]",
        );
        let cfg = parse_config(&text).unwrap();
        match cfg.build() {
            Err(Error::Config(msg)) => assert!(msg.contains("drift"), "message: {msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn config_echo_round_trips() {
        let cfg = parse_config(&heat_json()).unwrap();
        let echoed = serde_json::to_string(&cfg).unwrap();
        let again = parse_config(&echoed).unwrap();
        let a = again.build().unwrap();
        let b = cfg.build().unwrap();
        assert_eq!(a.horizon, b.horizon);
        assert_eq!(a.coeffs.eval_h(&[0.3]), b.coeffs.eval_h(&[0.3]));
    }
}
