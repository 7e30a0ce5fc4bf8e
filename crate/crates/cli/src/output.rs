//! CSV emission and flag parsing helpers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a CSV back recovers the exact f64 bits; that is what makes byte-identity
//! across thread counts a meaningful determinism check.

use pvi_core::backward::SweepReport;
use pvi_core::error::{Error, Result};
use pvi_core::feynman_kac::SolutionGrid;
use pvi_core::sde::PathBundle;

/// Shortest representation that parses back to the same f64.
#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Parse a comma-separated list of floats.
pub fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("cannot parse {what} entry {tok:?} as a number"))
            })
        })
        .collect()
}

/// Parse semicolon-separated points with comma-separated coordinates.
pub fn parse_points(text: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut points = Vec::new();
    for tok in text.split(';') {
        let p = parse_f64_list(tok, "point")?;
        if p.len() != dim {
            return Err(Error::Config(format!(
                "point {tok:?} has {} coordinates, domain has dimension {dim}",
                p.len()
            )));
        }
        points.push(p);
    }
    Ok(points)
}

/// Solution grid as RFC-4180 CSV: `t,x1..xd,u,std_error,boundary`.
pub fn solution_csv(sol: &SolutionGrid) -> String {
    let dim = sol.points.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for c in 1..=dim {
        out.push_str(&format!(",x{c}"));
    }
    out.push_str(",u,std_error,boundary\r\n");
    for (ti, &t) in sol.times.iter().enumerate() {
        for (pi, point) in sol.points.iter().enumerate() {
            out.push_str(&fmt_f64(t));
            for &c in point {
                out.push(',');
                out.push_str(&fmt_f64(c));
            }
            out.push(',');
            out.push_str(&fmt_f64(sol.value_at(ti, pi)));
            out.push(',');
            out.push_str(&fmt_f64(sol.std_error_at(ti, pi)));
            out.push(',');
            out.push_str(if sol.boundary[pi] { "1" } else { "0" });
            out.push_str("\r\n");
        }
    }
    out
}

/// Path dump as CSV: `path,step,t,x1..xd,local_time`.
pub fn paths_csv(bundle: &PathBundle) -> String {
    let mut out = String::from("path,step,t");
    for c in 1..=bundle.dim {
        out.push_str(&format!(",x{c}"));
    }
    out.push_str(",local_time\r\n");
    for p in 0..bundle.n_paths {
        for k in 0..=bundle.grid.n_steps {
            out.push_str(&format!("{p},{k},{}", fmt_f64(bundle.grid.node(k))));
            for &c in bundle.state(p, k) {
                out.push(',');
                out.push_str(&fmt_f64(c));
            }
            out.push(',');
            out.push_str(&fmt_f64(bundle.local_time_at(p, k)));
            out.push_str("\r\n");
        }
    }
    out
}

/// Pairwise sweep distances as CSV: `eps_a,eps_b,distance_sq,distance`.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("eps_a,eps_b,distance_sq,distance\r\n");
    for e in &report.entries {
        out.push_str(&format!(
            "{},{},{},{}\r\n",
            fmt_f64(e.eps_a),
            fmt_f64(e.eps_b),
            fmt_f64(e.distance_sq),
            fmt_f64(e.distance_sq.sqrt())
        ));
    }
    out
}
