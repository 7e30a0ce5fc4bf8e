//! Error taxonomy shared by the whole crate.
//!
//! The classes matter for the CLI exit codes: configuration and parse problems
//! are reported differently from numerical failures, and precondition/domain
//! violations differently again. Keeping one enum avoids a zoo of conversion
//! impls between modules that call into each other.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Expression text could not be parsed. `offset` is a byte offset into the
    /// source, `expected` lists the token classes that would have been legal.
    #[error("parse error at byte {offset}: found {found}, expected {}", expected.join(" | "))]
    Parse {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },

    /// An expression evaluated to a non-finite value, or used a variable that
    /// is not available in its context.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// Invalid configuration: bad constants, malformed coefficient tables,
    /// schema violations.
    #[error("config error: {0}")]
    Config(String),

    /// A value lies outside the domain of a convex function.
    #[error("domain error: {0}")]
    DomainViolation(String),

    /// A precondition of an operation does not hold (bad grid, point outside
    /// the spatial domain, empty input, ...).
    #[error("precondition error: {0}")]
    Precondition(String),

    /// Geometric projection failed, usually because a predictor step overshot
    /// further than the configured reach of the boundary.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// An iterative numerical routine did not converge.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// The regression step could not produce usable coefficients.
    #[error("regression error: {0}")]
    Regression(String),

    /// The per-step implicit scalar equation could not be solved to tolerance.
    #[error("implicit solve error: {0}")]
    ImplicitSolve(String),

    /// A scheme parameter lies outside its stability region.
    #[error("stability error: {0}")]
    Stability(String),

    /// Two gridded objects cannot be compared (no overlap, dimension clash).
    #[error("shape error: {0}")]
    Shape(String),
}

impl Error {
    /// Process exit code class for the CLI: 2 for configuration problems,
    /// 1 for domain/validation failures, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Eval(_) | Error::Config(_) => 2,
            Error::DomainViolation(_) | Error::Precondition(_) => 1,
            Error::Geometry(_)
            | Error::Convergence(_)
            | Error::Regression(_)
            | Error::ImplicitSolve(_)
            | Error::Stability(_)
            | Error::Shape(_) => 3,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
