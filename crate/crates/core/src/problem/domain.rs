//! Spatial domains with smooth level-set descriptions.
//!
//! A domain `D` is described by a function `l` with `l < 0` inside, `l = 0`
//! on the boundary, `l > 0` outside, and `|grad l| = 1` on the boundary so
//! that `grad l` is the outward normal there. Two presets are provided:
//!
//! - `Interval { x_left, x_right }` in dimension 1. The signed distance has a
//!   kink at the midpoint, so `l` replaces `|x - c|` by an even sextic inside
//!   the middle half of the interval; `l` equals the signed distance exactly
//!   within `r/2` of the boundary (`r` the half-width) and is `C^3` globally.
//! - `Ball { center, radius }` in any dimension, with
//!   `l(x) = (|x - c|^2 - r^2) / (2 r)`, smooth everywhere.
//!
//! Projections of outside points onto the boundary are analytic for both
//! presets. A generic damped-Newton projection on the level set is provided
//! as well; the analytic forms double as its test oracle.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Points are considered on the boundary / inside up to this slack, which
/// absorbs roundoff from analytic projections (exact to a few ulps).
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// One-dimensional interval `[x_left, x_right]`.
    Interval { x_left: f64, x_right: f64 },
    /// Euclidean ball of the given center and radius.
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainSpec {
    pub fn interval(x_left: f64, x_right: f64) -> Result<Self> {
        let d = DomainSpec::Interval { x_left, x_right };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = DomainSpec::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                if !x_left.is_finite() || !x_right.is_finite() {
                    return Err(Error::Config("interval endpoints must be finite".into()));
                }
                if !(x_left < x_right) {
                    return Err(Error::Config(format!(
                        "interval needs x_left < x_right, got [{x_left}, {x_right}]"
                    )));
                }
                Ok(())
            }
            DomainSpec::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::Config("ball center must have dimension >= 1".into()));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Config(format!(
                        "ball radius must be positive and finite, got {radius}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Ball { center, .. } => center.len(),
        }
    }

    /// Level function `l(x)`.
    pub fn level(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                let (c, r) = interval_center_radius(*x_left, *x_right);
                let u = (x[0] - c).abs();
                if u >= 0.5 * r {
                    u - r
                } else {
                    smoothed_abs(x[0] - c, 0.5 * r) - r
                }
            }
            DomainSpec::Ball { center, radius } => {
                let mut sq = 0.0;
                for (xi, ci) in x.iter().zip(center) {
                    sq += (xi - ci) * (xi - ci);
                }
                (sq - radius * radius) / (2.0 * radius)
            }
        }
    }

    /// Gradient of the level function, written into `out`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                let (c, r) = interval_center_radius(*x_left, *x_right);
                let v = x[0] - c;
                out[0] = if v.abs() >= 0.5 * r {
                    v.signum()
                } else {
                    smoothed_abs_d1(v, 0.5 * r)
                };
            }
            DomainSpec::Ball { center, radius } => {
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    *o = (xi - ci) / radius;
                }
            }
        }
    }

    /// Hessian of the level function, row-major `d x d`, written into `out`.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(out.len(), d * d);
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                let (c, r) = interval_center_radius(*x_left, *x_right);
                let v = x[0] - c;
                out[0] = if v.abs() >= 0.5 * r {
                    0.0
                } else {
                    smoothed_abs_d2(v, 0.5 * r)
                };
            }
            DomainSpec::Ball { radius, .. } => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0 / radius;
                }
            }
        }
    }

    /// True when `l(x) <= MEMBERSHIP_TOL` (closure of the domain).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) <= MEMBERSHIP_TOL
    }

    /// True when `|l(x)| <= MEMBERSHIP_TOL`.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.level(x).abs() <= MEMBERSHIP_TOL
    }

    /// Largest projection distance accepted before a predictor step counts
    /// as a geometry error. For the interval the boundary is flat and the
    /// clamp is the exact nearest-point map at any distance, so the cap is
    /// the half-width (a runaway-dynamics guard). For the ball, curvature
    /// degrades the local-time approximation, so the cap is half the
    /// radius.
    pub fn reach_bound(&self) -> f64 {
        match self {
            DomainSpec::Interval { x_left, x_right } => 0.5 * (x_right - x_left),
            DomainSpec::Ball { radius, .. } => 0.5 * radius,
        }
    }

    /// Project an outside point onto the boundary. Returns the distance
    /// moved; the projected point replaces `x`.
    ///
    /// Preconditions: `l(x) > 0` and the projection distance stays within
    /// `reach_bound()`. Overshoots beyond the reach indicate a too-coarse
    /// time step and are reported as geometry errors; `x` is left unchanged
    /// in that case.
    pub fn project_onto_boundary(&self, x: &mut [f64]) -> Result<f64> {
        let lv = self.level(x);
        if lv <= 0.0 {
            return Err(Error::Precondition(format!(
                "projection expects an outside point, got level {lv}"
            )));
        }
        let dist = match self {
            DomainSpec::Interval { x_left, x_right } => {
                (x[0] - x[0].clamp(*x_left, *x_right)).abs()
            }
            DomainSpec::Ball { center, radius } => {
                let mut sq = 0.0;
                for (xi, ci) in x.iter().zip(center) {
                    sq += (xi - ci) * (xi - ci);
                }
                sq.sqrt() - radius
            }
        };
        if dist > self.reach_bound() {
            return Err(Error::Geometry(format!(
                "point overshot the boundary by {dist} (reach bound {}); \
                 reduce the time step",
                self.reach_bound()
            )));
        }
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                x[0] = x[0].clamp(*x_left, *x_right);
            }
            DomainSpec::Ball { center, radius } => {
                let scale = radius / (dist + radius);
                for (xi, ci) in x.iter_mut().zip(center) {
                    *xi = ci + (*xi - ci) * scale;
                }
            }
        }
        Ok(dist)
    }

    /// Generic projection onto the zero level set by damped Newton along the
    /// (normalized) gradient direction, refined by one orthogonal correction.
    ///
    /// The presets have analytic projections; this path exists to keep the
    /// geometry machinery honest (it is tested against the analytic answers)
    /// and to support future level-set domains. Same preconditions as
    /// [`DomainSpec::project_onto_boundary`].
    pub fn project_newton(&self, x: &mut [f64]) -> Result<f64> {
        let lv = self.level(x);
        if lv <= 0.0 {
            return Err(Error::Precondition(format!(
                "projection expects an outside point, got level {lv}"
            )));
        }
        let d = self.dim();
        let start = x.to_vec();
        let mut dir = vec![0.0; d];
        self.gradient(x, &mut dir);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::Geometry(
                "level gradient vanished at projection start".into(),
            ));
        }
        for v in dir.iter_mut() {
            *v /= norm;
        }
        // Newton on s -> l(start - s * dir), damped to keep |l| decreasing.
        let mut s = 0.0;
        let mut point = start.clone();
        let mut grad = vec![0.0; d];
        let mut val = lv;
        for _ in 0..60 {
            if val.abs() <= 1e-13 * (1.0 + self.reach_bound()) {
                break;
            }
            self.gradient(&point, &mut grad);
            let slope: f64 = -grad.iter().zip(&dir).map(|(g, n)| g * n).sum::<f64>();
            if slope.abs() < 1e-14 {
                return Err(Error::Convergence(
                    "projection Newton hit a flat direction".into(),
                ));
            }
            let mut step = -val / slope;
            // Damping: halve until the level magnitude shrinks.
            for _ in 0..40 {
                let cand = s + step;
                for (p, (st, n)) in point.iter_mut().zip(start.iter().zip(&dir)) {
                    *p = st - cand * n;
                }
                let cand_val = self.level(&point);
                if cand_val.abs() < val.abs() {
                    s = cand;
                    val = cand_val;
                    break;
                }
                step *= 0.5;
            }
        }
        if val.abs() > 1e-10 {
            return Err(Error::Convergence(format!(
                "projection Newton stalled at level {val}"
            )));
        }
        // One orthogonal correction: full gradient step back to the surface.
        self.gradient(&point, &mut grad);
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        if gsq > 1e-28 {
            let lvp = self.level(&point);
            for (p, g) in point.iter_mut().zip(&grad) {
                *p -= lvp * g / gsq;
            }
        }
        let dist = point
            .iter()
            .zip(&start)
            .map(|(p, s)| (p - s) * (p - s))
            .sum::<f64>()
            .sqrt();
        if dist > self.reach_bound() {
            return Err(Error::Geometry(format!(
                "point overshot the boundary by {dist} (reach bound {}); \
                 reduce the time step",
                self.reach_bound()
            )));
        }
        x.copy_from_slice(&point);
        Ok(dist)
    }

    /// Deterministic quasi-random interior sample for validators.
    pub fn sample_interior(&self, rng: &CounterRng, i: u64) -> Vec<f64> {
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                vec![x_left + rng.uniform(i, 0, 0) * (x_right - x_left)]
            }
            DomainSpec::Ball { center, radius } => {
                let d = center.len();
                let mut dir: Vec<f64> = (0..d).map(|c| rng.normal(i, 1, c as u64)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let rad = radius * rng.uniform(i, 2, 0).powf(1.0 / d as f64);
                for (v, c) in dir.iter_mut().zip(center) {
                    *v = c + *v / norm * rad;
                }
                dir
            }
        }
    }

    /// Deterministic quasi-random boundary sample for validators.
    pub fn sample_boundary(&self, rng: &CounterRng, i: u64) -> Vec<f64> {
        match self {
            DomainSpec::Interval { x_left, x_right } => {
                if rng.uniform(i, 3, 0) < 0.5 {
                    vec![*x_left]
                } else {
                    vec![*x_right]
                }
            }
            DomainSpec::Ball { center, radius } => {
                let d = center.len();
                let mut dir: Vec<f64> = (0..d).map(|c| rng.normal(i, 4, c as u64)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                for (v, c) in dir.iter_mut().zip(center) {
                    *v = c + *v / norm * radius;
                }
                dir
            }
        }
    }
}

fn interval_center_radius(x_left: f64, x_right: f64) -> (f64, f64) {
    (0.5 * (x_left + x_right), 0.5 * (x_right - x_left))
}

/// Even sextic `p(u)` with `p(h) = h`, `p'(h) = 1`, `p''(h) = p'''(h) = 0`:
/// the `C^3` replacement for `|v|` on `|v| < h`.
///
/// `p(u) = 5h/16 + 15 u^2 / (16 h) - 5 u^4 / (16 h^3) + u^6 / (16 h^5)`.
#[inline]
fn smoothed_abs(v: f64, h: f64) -> f64 {
    let q = v * v;
    5.0 * h / 16.0 + q * (15.0 / (16.0 * h) + q * (-5.0 / (16.0 * h.powi(3)) + q / (16.0 * h.powi(5))))
}

#[inline]
fn smoothed_abs_d1(v: f64, h: f64) -> f64 {
    let q = v * v;
    v * (15.0 / (8.0 * h) + q * (-5.0 / (4.0 * h.powi(3)) + q * 3.0 / (8.0 * h.powi(5))))
}

#[inline]
fn smoothed_abs_d2(v: f64, h: f64) -> f64 {
    let q = v * v;
    15.0 / (8.0 * h) + q * (-15.0 / (4.0 * h.powi(3)) + q * 15.0 / (8.0 * h.powi(5)))
}
