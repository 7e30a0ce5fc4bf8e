//! Implementations of the subcommands.
//!
//! Shape shared by all of them: load and build the problem, resolve the
//! effective parameters, run the core routines, write primary outputs, then
//! write the manifest with digests of everything emitted. Hard failures
//! bubble up as [`pvi_core::Error`] and become exit codes in `main`; soft
//! verdicts (failed validation checks, oracle gaps beyond tolerance) still
//! produce all files and are encoded in the exit status.

use std::path::Path;

use pvi_core::backward::{apriori_bounds_report, penalization_sweep, solve_backward, SolverConfig};
use pvi_core::config::{load_problem, ConfigFile};
use pvi_core::error::{Error, Result};
use pvi_core::feynman_kac::{
    continuity_report, domain_membership_report, solve_grid, ContinuityReport, MembershipReport,
    DEFAULT_KAPPA,
};
use pvi_core::oracle::{compare_grid_to_samples, solve_penalized_fd};
use pvi_core::problem::{validate, DomainSpec, ProblemSpec};
use pvi_core::sde::{estimate_exp_local_time, simulate, TimeGrid};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{write_text, ManifestBuilder};
use crate::output;
use crate::Command;

pub fn dispatch(command: Command, threads: usize) -> Result<u8> {
    match command {
        Command::Validate {
            common,
            samples,
            eps_list,
        } => cmd_validate(&common, samples, &eps_list, threads),
        Command::Solve {
            common,
            times,
            points,
            paths,
            steps,
            eps,
            basis_degree,
        } => cmd_solve(&common, &times, &points, paths, steps, eps, basis_degree, threads),
        Command::SweepEps {
            common,
            eps_list,
            x0,
            paths,
            steps,
            basis_degree,
        } => cmd_sweep_eps(&common, &eps_list, x0.as_deref(), paths, steps, basis_degree, threads),
        Command::CompareOracle {
            common,
            times,
            points,
            paths,
            steps,
            eps,
            basis_degree,
            tolerance,
            oracle_nx,
            oracle_nt,
            oracle_theta,
        } => cmd_compare_oracle(
            &common,
            times.as_deref(),
            points.as_deref(),
            paths,
            steps,
            eps,
            basis_degree,
            tolerance,
            (oracle_nx, oracle_nt, oracle_theta),
            threads,
        ),
        Command::SimulateSde {
            common,
            x0,
            paths,
            steps,
        } => cmd_simulate_sde(&common, x0.as_deref(), paths, steps, threads),
        Command::BoundsReport {
            common,
            x0,
            paths,
            steps,
            eps,
            basis_degree,
        } => cmd_bounds_report(&common, x0.as_deref(), paths, steps, eps, basis_degree, threads),
    }
}

use crate::CommonArgs;

/// Load the config, build the problem, and start the manifest.
fn begin(
    common: &CommonArgs,
    command: &'static str,
    threads: usize,
) -> Result<(ConfigFile, ProblemSpec, ManifestBuilder)> {
    let (cfg, spec) = load_problem(&common.config)?;
    let echo = serde_json::to_value(&cfg)
        .map_err(|e| Error::Config(format!("config echo serialization failed: {e}")))?;
    let mut manifest = ManifestBuilder::new(command, common.seed, echo, threads);
    manifest.phase("load");
    Ok((cfg, spec, manifest))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    write_text(path, &text)
}

/// Midpoint of the interval or center of the ball.
fn domain_center(domain: &DomainSpec) -> Vec<f64> {
    match domain {
        DomainSpec::Interval { x_left, x_right } => vec![0.5 * (x_left + x_right)],
        DomainSpec::Ball { center, .. } => center.clone(),
    }
}

fn resolve_x0(spec: &ProblemSpec, flag: Option<&str>) -> Result<Vec<f64>> {
    match flag {
        Some(text) => {
            let x0 = output::parse_f64_list(text, "x0")?;
            if x0.len() != spec.domain.dim() {
                return Err(Error::Config(format!(
                    "x0 has {} coordinates, domain has dimension {}",
                    x0.len(),
                    spec.domain.dim()
                )));
            }
            Ok(x0)
        }
        None => Ok(domain_center(&spec.domain)),
    }
}

/// The terminal-value problem actually solved by the pipeline: every
/// coefficient read at the reversed clock, datum as terminal condition.
fn reversed_spec(spec: &ProblemSpec) -> ProblemSpec {
    let mut rev = spec.clone();
    rev.coeffs = spec.coeffs.reversed(spec.horizon);
    rev
}

#[derive(Serialize)]
struct ValidateSummary {
    assumptions: validate::ValidationReport,
    compatibility: validate::CompatReport,
    uniqueness: validate::UniquenessReport,
    all_passed: bool,
}

fn cmd_validate(
    common: &CommonArgs,
    samples: usize,
    eps_list: &str,
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "validate", threads)?;
    let eps = output::parse_f64_list(eps_list, "eps-list")?;
    manifest.resolved(json!({"samples": samples, "eps_list": eps}));

    let assumptions = validate::validate_assumptions(&spec, samples, common.seed);
    let compatibility = validate::check_compatibility(&spec, &eps, samples, common.seed)?;
    let uniqueness = validate::uniqueness_hypotheses_check(&spec, samples, common.seed);
    let all_passed =
        assumptions.all_passed() && compatibility.all_passed() && uniqueness.all_passed();
    manifest.phase("run");

    let summary = ValidateSummary {
        assumptions,
        compatibility,
        uniqueness,
        all_passed,
    };
    write_json(&common.out.join("validate_report.json"), &summary)?;
    manifest.finish(&common.out, &["validate_report.json"])?;
    Ok(if all_passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    times: &'a [f64],
    points: &'a [Vec<f64>],
    boundary: &'a [bool],
    values: &'a [f64],
    std_errors: &'a [f64],
    n_paths: usize,
    n_steps: usize,
    eps: f64,
    seed: u64,
    membership: MembershipReport,
    continuity: ContinuityReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    common: &CommonArgs,
    times: &str,
    points: &str,
    paths: usize,
    steps: usize,
    eps: f64,
    basis_degree: usize,
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "solve", threads)?;
    let times = output::parse_f64_list(times, "times")?;
    let points = output::parse_points(points, spec.domain.dim())?;
    let mut cfg = SolverConfig::new(eps)?;
    cfg.basis_degree = basis_degree;
    manifest.resolved(json!({
        "times": times,
        "points": points,
        "paths": paths,
        "steps": steps,
        "eps": eps,
        "basis_degree": basis_degree,
    }));

    let sol = solve_grid(&spec, &times, &points, paths, steps, &cfg, common.seed)?;
    let membership = domain_membership_report(&sol, &spec, DEFAULT_KAPPA);
    let continuity = continuity_report(&sol);
    manifest.phase("run");

    write_text(&common.out.join("solution.csv"), &output::solution_csv(&sol))?;
    let summary = SolveSummary {
        times: &sol.times,
        points: &sol.points,
        boundary: &sol.boundary,
        values: &sol.values,
        std_errors: &sol.std_errors,
        n_paths: sol.n_paths,
        n_steps: sol.n_steps,
        eps: sol.eps,
        seed: sol.seed,
        membership,
        continuity,
    };
    write_json(&common.out.join("summary.json"), &summary)?;
    manifest.finish(&common.out, &["solution.csv", "summary.json"])?;
    Ok(0)
}

fn cmd_sweep_eps(
    common: &CommonArgs,
    eps_list: &str,
    x0: Option<&str>,
    paths: usize,
    steps: usize,
    basis_degree: usize,
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "sweep-eps", threads)?;
    let eps = output::parse_f64_list(eps_list, "eps-list")?;
    let x0 = resolve_x0(&spec, x0)?;
    manifest.resolved(json!({
        "eps_list": eps,
        "x0": x0,
        "paths": paths,
        "steps": steps,
        "basis_degree": basis_degree,
    }));

    let rev = reversed_spec(&spec);
    let grid = TimeGrid::new(0.0, spec.horizon, steps)?;
    let bundle = simulate(&rev, &x0, grid, paths, common.seed)?;
    let mut cfg = SolverConfig::new(eps[0])?;
    cfg.basis_degree = basis_degree;
    let report = penalization_sweep(&rev, &bundle, &eps, &cfg)?;
    manifest.phase("run");

    write_text(&common.out.join("sweep.csv"), &output::sweep_csv(&report))?;
    write_json(&common.out.join("sweep.json"), &report)?;
    manifest.finish(&common.out, &["sweep.csv", "sweep.json"])?;
    Ok(0)
}

#[derive(Serialize)]
struct CompareRow {
    t: f64,
    x: f64,
    pipeline: f64,
    pipeline_std_error: f64,
    oracle: f64,
    diff: f64,
}

#[derive(Serialize)]
struct CompareSummary {
    sup_norm: f64,
    l2_norm: f64,
    tolerance: f64,
    passed: bool,
    oracle_nx: usize,
    oracle_nt: usize,
    oracle_theta: f64,
    oracle_courant: f64,
    rows: Vec<CompareRow>,
}

/// Endpoints of a one-dimensional domain.
fn interval_bounds(spec: &ProblemSpec) -> Result<(f64, f64)> {
    match &spec.domain {
        DomainSpec::Interval { x_left, x_right } => Ok((*x_left, *x_right)),
        DomainSpec::Ball { center, radius } if center.len() == 1 => {
            Ok((center[0] - radius, center[0] + radius))
        }
        _ => Err(Error::Precondition(
            "the oracle comparison requires a one-dimensional domain".into(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare_oracle(
    common: &CommonArgs,
    times: Option<&str>,
    points: Option<&str>,
    paths: usize,
    steps: usize,
    eps: f64,
    basis_degree: usize,
    tolerance: f64,
    oracle_dims: (usize, usize, f64),
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "compare-oracle", threads)?;
    let (xl, xr) = interval_bounds(&spec)?;
    let times = match times {
        Some(text) => output::parse_f64_list(text, "times")?,
        None => vec![0.5 * spec.horizon, spec.horizon],
    };
    let points = match points {
        Some(text) => output::parse_points(text, 1)?,
        None => [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|w| vec![xl + w * (xr - xl)])
            .collect(),
    };
    let (nx, nt, theta) = oracle_dims;
    let mut cfg = SolverConfig::new(eps)?;
    cfg.basis_degree = basis_degree;
    manifest.resolved(json!({
        "times": times,
        "points": points,
        "paths": paths,
        "steps": steps,
        "eps": eps,
        "basis_degree": basis_degree,
        "tolerance": tolerance,
        "oracle_nx": nx,
        "oracle_nt": nt,
        "oracle_theta": theta,
    }));

    let sol = solve_grid(&spec, &times, &points, paths, steps, &cfg, common.seed)?;
    let fd = solve_penalized_fd(&spec, eps, nx, nt, theta)?;
    let mut samples = Vec::new();
    for (ti, &t) in sol.times.iter().enumerate() {
        for (pi, point) in sol.points.iter().enumerate() {
            samples.push((t, point[0], sol.value_at(ti, pi)));
        }
    }
    let report = compare_grid_to_samples(&fd, &samples)?;
    let passed = report.sup_norm <= tolerance;
    manifest.phase("run");

    let rows = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| CompareRow {
            t: r.t,
            x: r.x,
            pipeline: r.b,
            pipeline_std_error: sol.std_errors[i],
            oracle: r.a,
            diff: r.diff,
        })
        .collect();
    let summary = CompareSummary {
        sup_norm: report.sup_norm,
        l2_norm: report.l2_norm,
        tolerance,
        passed,
        oracle_nx: nx,
        oracle_nt: nt,
        oracle_theta: theta,
        oracle_courant: fd.courant,
        rows,
    };
    write_json(&common.out.join("compare.json"), &summary)?;
    manifest.finish(&common.out, &["compare.json"])?;
    if !passed {
        eprintln!(
            "oracle gap {} exceeds tolerance {tolerance}",
            report.sup_norm
        );
    }
    Ok(if passed { 0 } else { 1 })
}

fn cmd_simulate_sde(
    common: &CommonArgs,
    x0: Option<&str>,
    paths: usize,
    steps: usize,
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "simulate-sde", threads)?;
    let x0 = resolve_x0(&spec, x0)?;
    manifest.resolved(json!({"x0": x0, "paths": paths, "steps": steps}));

    let grid = TimeGrid::new(0.0, spec.horizon, steps)?;
    let bundle = simulate(&spec, &x0, grid, paths, common.seed)?;
    bundle.validate_invariants(&spec.domain)?;
    let (exp_a, exp_a_se) = estimate_exp_local_time(&bundle, spec.constants.mu)?;
    manifest.phase("run");

    write_text(&common.out.join("paths.csv"), &output::paths_csv(&bundle))?;
    let summary = json!({
        "n_paths": paths,
        "n_steps": steps,
        "seed": common.seed,
        "x0": x0,
        "invariants_checked": true,
        "exp_local_time": {
            "mu": spec.constants.mu,
            "estimate": exp_a,
            "std_error": exp_a_se,
        },
    });
    write_json(&common.out.join("summary.json"), &summary)?;
    manifest.finish(&common.out, &["paths.csv", "summary.json"])?;
    Ok(0)
}

fn cmd_bounds_report(
    common: &CommonArgs,
    x0: Option<&str>,
    paths: usize,
    steps: usize,
    eps: f64,
    basis_degree: usize,
    threads: usize,
) -> Result<u8> {
    let (_cfg, spec, mut manifest) = begin(common, "bounds-report", threads)?;
    let x0 = resolve_x0(&spec, x0)?;
    let mut cfg = SolverConfig::new(eps)?;
    cfg.basis_degree = basis_degree;
    manifest.resolved(json!({
        "x0": x0,
        "paths": paths,
        "steps": steps,
        "eps": eps,
        "basis_degree": basis_degree,
    }));

    let rev = reversed_spec(&spec);
    let grid = TimeGrid::new(0.0, spec.horizon, steps)?;
    let bundle = simulate(&rev, &x0, grid, paths, common.seed)?;
    let sol = solve_backward(&rev, &bundle, &cfg)?;
    let report = apriori_bounds_report(&rev, &bundle, &sol)?;
    manifest.phase("run");

    let summary = json!({
        "x0": x0,
        "paths": paths,
        "steps": steps,
        "eps": eps,
        "seed": common.seed,
        "warnings": sol.warnings,
        "report": report,
    });
    write_json(&common.out.join("bounds.json"), &summary)?;
    manifest.finish(&common.out, &["bounds.json"])?;
    Ok(0)
}
