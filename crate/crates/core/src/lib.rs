//! Numerical solver for parabolic variational inequalities (PVIs) with
//! multivalued boundary conditions of Neumann type.
//!
//! The problem solved here is, on a smooth bounded domain `D` with outward
//! normal `n`,
//!
//! ```text
//!   du/dt(t,x) - L_t u(t,x) + dphi(u(t,x))  'contains'  f(t, x, u, (grad u) sigma)   in (0,T) x D
//!   du/dn(t,x) + dpsi(u(t,x))               'contains'  g(t, x, u)                   on (0,T) x Bd(D)
//!   u(0,x) = h(x)
//! ```
//!
//! where `L_t v = 1/2 Tr(sigma sigma* D^2 v) + <b, grad v>` and `dphi`, `dpsi`
//! are subdifferentials of lower semicontinuous convex functions. The solver
//! follows the probabilistic route: it simulates diffusions reflected at the
//! boundary (accumulating a boundary local time `A`), replaces the multivalued
//! operators by their Yosida regularizations with a penalization parameter
//! `eps`, solves the resulting backward stochastic equation by regression
//! Monte Carlo with implicit prox steps, and reads the solution off as
//! `u(t,x) = Y` at the start of the time window.
//!
//! Module map:
//! - [`convex`]: convex functions, resolvents, Yosida approximations, prox steps.
//! - [`expr`]: a small arithmetic expression language for coefficients.
//! - [`problem`]: domain geometry, coefficients, structural constants, validation.
//! - [`rng`]: counter-based random number generation (reproducible, parallel-safe).
//! - [`sde`]: reflected Euler path simulation with local-time bookkeeping.
//! - [`regression`]: least-squares conditional expectation estimators.
//! - [`backward`]: the penalized backward solver and its diagnostic experiments.
//! - [`feynman_kac`]: pointwise/grid evaluation of `u` via time reversal.
//! - [`oracle`]: independent deterministic reference solvers for verification.
//! - [`config`]: JSON problem configuration (versioned schema).
//! - [`stats`]: summation, moments, and slope fits used by the reports.

pub mod backward;
pub mod config;
pub mod convex;
pub mod error;
pub mod expr;
pub mod feynman_kac;
pub mod oracle;
pub mod problem;
pub mod regression;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::Error;
