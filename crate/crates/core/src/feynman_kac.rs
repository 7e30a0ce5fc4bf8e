//! Deterministic solution values on user grids.
//!
//! The configuration files describe the forward problem with its datum at
//! time zero. The probabilistic machinery works on the associated
//! terminal-value problem obtained by reading every coefficient at the
//! reversed clock `T - s`: paths started at `(T - t, x)` and run to the
//! horizon carry the value `u(t, x)` back to their start node. This module
//! owns that reversal, the replication that turns path bundles into error
//! bars, and the diagnostic reports over solution grids.

use rayon::prelude::*;
use serde::Serialize;

use crate::backward::{solve_backward, SolverConfig};
use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::rng::{derive_key, tag};
use crate::sde::{simulate, TimeGrid};
use crate::stats;

/// Number of independent path families behind one point estimate. The
/// reported value is the mean of the replicate means and the standard error
/// is their sample spread over `sqrt(REPLICATES)`; replicating whole solves
/// keeps the error bar honest even though the regression couples paths
/// inside a single solve.
pub const REPLICATES: usize = 8;

/// Slack multiplier on `sqrt(eps)` used by the membership report.
pub const DEFAULT_KAPPA: f64 = 2.0;

fn check_point(spec: &ProblemSpec, x: &[f64]) -> Result<()> {
    let d = spec.domain.dim();
    if x.len() != d {
        return Err(Error::Shape(format!(
            "grid point {x:?} has dimension {}, domain has {d}",
            x.len()
        )));
    }
    let lv = spec.domain.level(x);
    if lv > 1e-10 {
        return Err(Error::Precondition(format!(
            "grid point {x:?} lies outside the closure (level {lv})"
        )));
    }
    Ok(())
}

/// Estimate `u(t, x)` for the forward problem `spec`.
///
/// Simulates `n_paths` reflected paths from `(T - t, x)` to the horizon
/// under the reversed clock, solves the penalized backward problem with
/// terminal data `h(X_T)`, and averages the start-node values. The paths
/// are split into [`REPLICATES`] independent families with their own seed
/// streams; the returned standard error is the spread of the family means.
///
/// `t = 0` is pinned: the initial condition holds exactly, so the datum is
/// returned with zero standard error and no simulation.
pub fn evaluate_point(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    n_paths: usize,
    n_steps: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_point(spec, x)?;
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(Error::Precondition(format!(
            "time {t} lies outside [0, {}]",
            spec.horizon
        )));
    }
    if t == 0.0 {
        return Ok((spec.coeffs.eval_h(x), 0.0));
    }
    let mut reversed = spec.clone();
    reversed.coeffs = spec.coeffs.reversed(spec.horizon);
    let grid = TimeGrid::new(spec.horizon - t, spec.horizon, n_steps)?;
    replicated_start_value(&reversed, x, grid, n_paths, cfg, seed)
}

/// Estimate `u(t, x)` through the shortened horizon `[0, t]`.
///
/// For time-independent coefficients the reversed clock is invisible and
/// the same value is computable on a horizon-`t` problem without any
/// reversal. This is the representation the autonomous-consistency check
/// compares against [`evaluate_point`].
pub fn evaluate_point_autonomous(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
    n_paths: usize,
    n_steps: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    check_point(spec, x)?;
    let autonomous = spec.coeffs.b.iter().all(|c| c.is_time_independent())
        && spec.coeffs.sigma.is_time_independent()
        && spec.coeffs.f.is_time_independent()
        && spec.coeffs.g.is_time_independent();
    if !autonomous {
        return Err(Error::Precondition(
            "the shortened-horizon formulation needs time-independent \
             coefficients"
                .into(),
        ));
    }
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(Error::Precondition(format!(
            "time {t} lies outside [0, {}]",
            spec.horizon
        )));
    }
    if t == 0.0 {
        return Ok((spec.coeffs.eval_h(x), 0.0));
    }
    let mut coeffs = spec.coeffs.clone();
    coeffs.reversed_at = None;
    let short = ProblemSpec::new(
        spec.domain.clone(),
        coeffs,
        spec.phi.clone(),
        spec.psi.clone(),
        spec.constants,
        t,
        spec.ranges,
    )?;
    let grid = TimeGrid::new(0.0, t, n_steps)?;
    replicated_start_value(&short, x, grid, n_paths, cfg, seed)
}

/// Shared core: run the replicate solves and pool their start-node means.
fn replicated_start_value(
    spec: &ProblemSpec,
    x: &[f64],
    grid: TimeGrid,
    n_paths: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_paths < 2 {
        return Err(Error::Config(format!(
            "need at least two paths for a standard error, got {n_paths}"
        )));
    }
    let reps = REPLICATES.min(n_paths);
    let base = n_paths / reps;
    let extra = n_paths % reps;
    let mut means = Vec::with_capacity(reps);
    for r in 0..reps {
        let rep_paths = base + usize::from(r < extra);
        let rep_seed = derive_key(&[seed, tag::NODE, r as u64]);
        let bundle = simulate(spec, x, grid, rep_paths, rep_seed)?;
        let sol = solve_backward(spec, &bundle, cfg)?;
        let starts: Vec<f64> = (0..rep_paths).map(|p| sol.y_at(p, 0)).collect();
        means.push(stats::mean(&starts));
    }
    let value = stats::mean(&means);
    let mut var = 0.0;
    for m in &means {
        var += (m - value) * (m - value);
    }
    var /= (reps - 1) as f64;
    let std_error = (var / reps as f64).sqrt();
    Ok((value, std_error))
}

/// Solution values over a tensor grid `times x points`.
///
/// Node `(ti, pi)` lives at `values[ti * points.len() + pi]`; the layout is
/// row-major in time. Points are tagged as boundary nodes when they sit on
/// the level set within 1e-10.
#[derive(Debug, Clone)]
pub struct SolutionGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub boundary: Vec<bool>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub eps: f64,
    pub seed: u64,
}

impl SolutionGrid {
    #[inline]
    pub fn value_at(&self, ti: usize, pi: usize) -> f64 {
        self.values[ti * self.points.len() + pi]
    }

    #[inline]
    pub fn std_error_at(&self, ti: usize, pi: usize) -> f64 {
        self.std_errors[ti * self.points.len() + pi]
    }
}

/// Fill a [`SolutionGrid`] by one independent point estimate per node.
///
/// Every node gets its own seed stream derived from `(seed, ti, pi)`, so
/// the grid is a pure function of its arguments: same inputs, bitwise same
/// output, regardless of thread count or node visit order. Nodes are
/// independent work items and run in parallel.
pub fn solve_grid(
    spec: &ProblemSpec,
    times: &[f64],
    points: &[Vec<f64>],
    n_paths: usize,
    n_steps: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<SolutionGrid> {
    cfg.validate()?;
    if times.is_empty() || points.is_empty() {
        return Err(Error::Precondition(
            "solution grid needs at least one time and one point".into(),
        ));
    }
    for &t in times {
        if !t.is_finite() || !(0.0..=spec.horizon).contains(&t) {
            return Err(Error::Precondition(format!(
                "grid time {t} lies outside [0, {}]",
                spec.horizon
            )));
        }
    }
    for x in points {
        check_point(spec, x)?;
    }
    let boundary: Vec<bool> = points
        .iter()
        .map(|x| spec.domain.level(x).abs() <= 1e-10)
        .collect();

    let n_pts = points.len();
    let nodes: Vec<(f64, f64)> = (0..times.len() * n_pts)
        .into_par_iter()
        .map(|idx| {
            let (ti, pi) = (idx / n_pts, idx % n_pts);
            let node_seed = derive_key(&[seed, tag::NODE, ti as u64, pi as u64]);
            evaluate_point(
                spec,
                times[ti],
                &points[pi],
                n_paths,
                n_steps,
                cfg,
                node_seed,
            )
        })
        .collect::<Result<_>>()?;

    let (values, std_errors) = nodes.into_iter().unzip();
    Ok(SolutionGrid {
        times: times.to_vec(),
        points: points.to_vec(),
        boundary,
        values,
        std_errors,
        n_paths,
        n_steps,
        eps: cfg.eps,
        seed,
    })
}

/// Worst constraint margin over the applicable nodes of one potential.
#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    /// Smallest signed distance from a nodal value to the constraint set;
    /// negative means penetration.
    pub worst_margin: f64,
    /// Allowance `3 SE + kappa sqrt(eps)` at the worst node.
    pub slack: f64,
    pub time: f64,
    pub point: Vec<f64>,
    pub pass: bool,
}

/// Constraint-membership summary of a solution grid.
///
/// A side is `None` when its potential places no constraint (not an
/// indicator) or when the grid has no applicable nodes; absent sides pass
/// vacuously.
#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub interior: Option<MarginReport>,
    pub boundary: Option<MarginReport>,
    pub kappa: f64,
    pub pass: bool,
}

fn constraint_bounds(fun: &ConvexFunction) -> Option<(f64, f64)> {
    match *fun {
        ConvexFunction::HalfLineLower { a } => Some((a, f64::INFINITY)),
        ConvexFunction::HalfLineUpper { b } => Some((f64::NEG_INFINITY, b)),
        ConvexFunction::Interval { a, b } => Some((a, b)),
        _ => None,
    }
}

/// Check the computed values against the effective domains of the
/// potentials: interior nodes against the interior potential, boundary
/// nodes against the boundary one. The pass threshold allows statistical
/// noise (three standard errors) plus the penalization penetration, which
/// scales like `sqrt(eps)` with the configurable factor `kappa`.
pub fn domain_membership_report(
    sol: &SolutionGrid,
    spec: &ProblemSpec,
    kappa: f64,
) -> MembershipReport {
    let margin_for = |bounds: (f64, f64), want_boundary: bool| -> Option<MarginReport> {
        let (lo, hi) = bounds;
        let mut worst: Option<(f64, usize, usize)> = None;
        for ti in 0..sol.times.len() {
            for pi in 0..sol.points.len() {
                if sol.boundary[pi] != want_boundary {
                    continue;
                }
                let u = sol.value_at(ti, pi);
                let margin = (u - lo).min(hi - u);
                if worst.map_or(true, |(w, _, _)| margin < w) {
                    worst = Some((margin, ti, pi));
                }
            }
        }
        worst.map(|(margin, ti, pi)| {
            let slack = 3.0 * sol.std_error_at(ti, pi) + kappa * sol.eps.sqrt();
            MarginReport {
                worst_margin: margin,
                slack,
                time: sol.times[ti],
                point: sol.points[pi].clone(),
                pass: margin >= -slack,
            }
        })
    };
    let interior = constraint_bounds(&spec.phi).and_then(|b| margin_for(b, false));
    let boundary = constraint_bounds(&spec.psi).and_then(|b| margin_for(b, true));
    let pass = interior.as_ref().map_or(true, |r| r.pass)
        && boundary.as_ref().map_or(true, |r| r.pass);
    MembershipReport {
        interior,
        boundary,
        kappa,
        pass,
    }
}

/// Discrete modulus of continuity of a solution grid.
///
/// Adjacency in space follows the order of the point list (a swept 1D grid
/// or any caller-chosen tour); a side with fewer than two nodes reports
/// `None`. Purely diagnostic: the moduli are meant to be read against the
/// noise level `max_std_error`, not asserted against.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub time_modulus: Option<f64>,
    pub space_modulus: Option<f64>,
    pub max_std_error: f64,
}

pub fn continuity_report(sol: &SolutionGrid) -> ContinuityReport {
    let nt = sol.times.len();
    let np = sol.points.len();
    let time_modulus = (nt >= 2).then(|| {
        let mut worst = 0.0f64;
        for ti in 0..nt - 1 {
            for pi in 0..np {
                worst = worst.max((sol.value_at(ti + 1, pi) - sol.value_at(ti, pi)).abs());
            }
        }
        worst
    });
    let space_modulus = (np >= 2).then(|| {
        let mut worst = 0.0f64;
        for ti in 0..nt {
            for pi in 0..np - 1 {
                worst = worst.max((sol.value_at(ti, pi + 1) - sol.value_at(ti, pi)).abs());
            }
        }
        worst
    });
    let max_std_error = sol.std_errors.iter().copied().fold(0.0, f64::max);
    ContinuityReport {
        time_modulus,
        space_modulus,
        max_std_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        AssumptionConstants, CoeffFn, Coefficients, DomainSpec, SigmaCoeff, ValidationRanges,
    };

    fn unit_spec(
        sigma: SigmaCoeff,
        f: CoeffFn,
        h: CoeffFn,
        phi: ConvexFunction,
        horizon: f64,
    ) -> ProblemSpec {
        let coeffs = Coefficients {
            dim: 1,
            b: vec![CoeffFn::Zero],
            sigma,
            f,
            g: CoeffFn::Zero,
            h,
            reversed_at: None,
        };
        ProblemSpec::new(
            DomainSpec::interval(0.0, 1.0).unwrap(),
            coeffs,
            phi,
            ConvexFunction::Zero,
            AssumptionConstants::default_weights(0.0, 0.0, 1.0, 1.0).unwrap(),
            horizon,
            ValidationRanges::default(),
        )
        .unwrap()
    }

    fn expr(src: &str, scope: crate::expr::VarScope) -> CoeffFn {
        CoeffFn::Expr(
            crate::expr::parse_expression(src)
                .unwrap()
                .compile(1, scope)
                .unwrap(),
        )
    }

    #[test]
    fn pinned_initial_time_returns_the_data_exactly() {
        let spec = unit_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let (v, se) = evaluate_point(&spec, 0.0, &[0.3], 100, 10, &cfg, 7).unwrap();
        assert_eq!(v, spec.coeffs.eval_h(&[0.3]));
        assert_eq!(se, 0.0);
    }

    #[test]
    fn constant_data_collapses_to_the_constant() {
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.4),
            CoeffFn::Zero,
            CoeffFn::Const(0.7),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let (v, se) = evaluate_point(&spec, 0.4, &[0.5], 64, 8, &cfg, 3).unwrap();
        assert!((v - 0.7).abs() <= 1e-12, "value {v}");
        assert!(se <= 1e-12, "standard error {se}");
    }

    #[test]
    fn reversed_clock_integrates_time_dependent_drivers() {
        // With sigma = 0 and f = t the solution is h + t^2/2; getting the
        // 0.32 instead of 0.48 pins the clock reversal, not just the sum.
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            expr("t", crate::expr::VarScope::full()),
            CoeffFn::Const(0.25),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let (v, se) = evaluate_point(&spec, 0.8, &[0.5], 2, 400, &cfg, 1).unwrap();
        assert!((v - 0.57).abs() < 2e-3, "value {v} vs 0.25 + 0.32");
        assert_eq!(se, 0.0, "no noise, no spread");
    }

    #[test]
    fn heat_benchmark_agrees_with_the_series_oracle() {
        let spec = unit_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            0.5,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let (v, se) = evaluate_point(&spec, 0.5, &[0.25], 4000, 50, &cfg, 11).unwrap();
        let exact = crate::oracle::neumann_heat_series(0.25, 0.5, &[0.0, 1.0], 6).value;
        let budget = 3.0 * se + 0.05;
        assert!(
            (v - exact).abs() <= budget,
            "value {v} vs oracle {exact}, budget {budget}"
        );
        assert!(se > 0.0 && se < 0.05, "standard error {se}");
    }

    #[test]
    fn autonomous_horizon_formulation_matches_the_reversed_clock() {
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.5),
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let (a, se_a) = evaluate_point(&spec, 0.4, &[0.3], 256, 10, &cfg, 5).unwrap();
        let (b, se_b) =
            evaluate_point_autonomous(&spec, 0.4, &[0.3], 256, 10, &cfg, 5).unwrap();
        assert!(
            (a - b).abs() <= 3.0 * (se_a + se_b) + 1e-12,
            "{a} vs {b} (se {se_a}, {se_b})"
        );

        let clocked = unit_spec(
            SigmaCoeff::ConstDiagonal(0.5),
            expr("t", crate::expr::VarScope::full()),
            CoeffFn::Const(0.0),
            ConvexFunction::Zero,
            1.0,
        );
        assert!(matches!(
            evaluate_point_autonomous(&clocked, 0.4, &[0.3], 16, 4, &cfg, 5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn grids_are_deterministic_and_pin_the_initial_row() {
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.4),
            CoeffFn::Zero,
            CoeffFn::Const(0.7),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let times = [0.0, 0.5];
        let points = vec![vec![0.0], vec![0.5], vec![1.0]];
        let a = solve_grid(&spec, &times, &points, 32, 4, &cfg, 9).unwrap();
        let b = solve_grid(&spec, &times, &points, 32, 4, &cfg, 9).unwrap();
        assert_eq!(a.values, b.values, "grids must be bitwise reproducible");
        assert_eq!(a.boundary, vec![true, false, true]);
        for pi in 0..3 {
            assert_eq!(a.value_at(0, pi), 0.7, "initial row is pinned");
            assert_eq!(a.std_error_at(0, pi), 0.0);
            assert!((a.value_at(1, pi) - 0.7).abs() <= 1e-12);
        }
    }

    #[test]
    fn grid_rejects_points_outside_the_closure() {
        let spec = unit_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Const(0.0),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let err = solve_grid(&spec, &[0.5], &[vec![1.5]], 16, 4, &cfg, 1).unwrap_err();
        match err {
            Error::Precondition(msg) => assert!(msg.contains("1.5"), "message: {msg}"),
            other => panic!("expected a precondition error, got {other:?}"),
        }
        assert!(matches!(
            solve_grid(&spec, &[], &[vec![0.5]], 16, 4, &cfg, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn membership_margins_absorb_the_obstacle_penetration() {
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.5),
            CoeffFn::Const(-1.0),
            CoeffFn::Const(0.0),
            ConvexFunction::half_line_lower(0.0).unwrap(),
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let sol = solve_grid(
            &spec,
            &[0.5],
            &[vec![0.25], vec![0.5], vec![0.75]],
            1500,
            30,
            &cfg,
            17,
        )
        .unwrap();
        let report = domain_membership_report(&sol, &spec, DEFAULT_KAPPA);
        let interior = report.interior.expect("interior constraint is active");
        assert!(
            interior.pass,
            "margin {} with slack {}",
            interior.worst_margin, interior.slack
        );
        assert!(interior.worst_margin <= 0.05, "values should hug the obstacle");
        assert!(report.boundary.is_none(), "no boundary constraint");
        assert!(report.pass);

        let free = unit_spec(
            SigmaCoeff::ConstDiagonal(0.5),
            CoeffFn::Zero,
            CoeffFn::Const(0.0),
            ConvexFunction::Zero,
            1.0,
        );
        let vac = domain_membership_report(&sol, &free, DEFAULT_KAPPA);
        assert!(vac.interior.is_none() && vac.boundary.is_none() && vac.pass);
    }

    #[test]
    fn continuity_report_tracks_constant_and_single_node_grids() {
        let spec = unit_spec(
            SigmaCoeff::ConstDiagonal(0.4),
            CoeffFn::Zero,
            CoeffFn::Const(0.7),
            ConvexFunction::Zero,
            1.0,
        );
        let cfg = SolverConfig::new(1e-3).unwrap();
        let sol = solve_grid(
            &spec,
            &[0.0, 0.5, 1.0],
            &[vec![0.25], vec![0.5], vec![0.75]],
            32,
            4,
            &cfg,
            23,
        )
        .unwrap();
        let rep = continuity_report(&sol);
        assert!(rep.time_modulus.unwrap() <= 1e-12);
        assert!(rep.space_modulus.unwrap() <= 1e-12);

        let single = solve_grid(&spec, &[0.5], &[vec![0.5]], 32, 4, &cfg, 23).unwrap();
        let rep = continuity_report(&single);
        assert!(rep.time_modulus.is_none());
        assert!(rep.space_modulus.is_none());
    }
}
