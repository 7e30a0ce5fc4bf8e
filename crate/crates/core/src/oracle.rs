//! Independent deterministic reference solvers.
//!
//! Three oracles validate the stochastic pipeline from the outside:
//!
//! - an exact cosine series for the reflected heat benchmark on `[0, 1]`,
//! - a finite-difference theta-scheme for the penalized problem in one
//!   space dimension, with ghost-node Neumann rows and exact prox splitting,
//! - a trapezoidal integrator for the zero-noise scalar case, with an exact
//!   multivalued mode for indicator potentials.
//!
//! None of them touch the simulation, regression or backward-induction code;
//! the only shared machinery is the convex-function toolkit, so agreement
//! between pipeline and oracle is evidence, not tautology.

use serde::Serialize;

use crate::convex::ConvexFunction;
use crate::error::{Error, Result};
use crate::problem::{DomainSpec, ProblemSpec};

/// Picard/bisection tolerance of the scalar implicit steps in the
/// deterministic integrator; well below every oracle comparison tolerance.
const SCALAR_TOL: f64 = 1e-14;

/// Iteration guard of those scalar solves.
const SCALAR_MAX_ITER: usize = 300;

/// A truncated series evaluation together with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesEval {
    pub value: f64,
    /// Sum of the absolute values of the discarded terms.
    pub tail_bound: f64,
}

/// Evaluate the Neumann heat solution on `[0, 1]` with unit diffusion:
///
/// ```text
///   u(t, x) = sum_k  c_k  exp(-k^2 pi^2 t / 2)  cos(k pi x) ,
/// ```
///
/// where `mode_coeffs[k] = c_k` expands the initial datum in the Neumann
/// cosine basis `{1, cos(k pi x)}`. The series is truncated after `n_terms`
/// terms and the discarded remainder of the (finite) coefficient list is
/// reported as `tail_bound`.
pub fn neumann_heat_series(x: f64, t: f64, mode_coeffs: &[f64], n_terms: usize) -> SeriesEval {
    let mut value = 0.0;
    let mut tail = 0.0;
    for (k, &c) in mode_coeffs.iter().enumerate() {
        let decay = (-0.5 * (k as f64) * (k as f64) * std::f64::consts::PI.powi(2) * t).exp();
        if k < n_terms {
            value += c * decay * ((k as f64) * std::f64::consts::PI * x).cos();
        } else {
            tail += (c * decay).abs();
        }
    }
    SeriesEval {
        value,
        tail_bound: tail,
    }
}

/// Space-time grid of finite-difference values.
///
/// `nx` and `nt` count cells, so there are `nx + 1` spatial nodes and
/// `nt + 1` time levels; `values[m * (nx + 1) + j]` holds `u(t_m, x_j)`.
#[derive(Debug, Clone)]
pub struct FdGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub theta: f64,
    /// Explicit-part Courant number `(1 - theta) dt max(sigma^2) / hx^2`,
    /// recorded for the stability ledger (the scheme is unconditionally
    /// stable for theta >= 1/2; the number still gauges time resolution).
    pub courant: f64,
}

impl FdGrid {
    #[inline]
    pub fn value_at(&self, m: usize, j: usize) -> f64 {
        self.values[m * self.x.len() + j]
    }

    /// Spatial trapezoid mean at time level `m`.
    pub fn spatial_mean(&self, m: usize) -> f64 {
        let n = self.x.len();
        let row = &self.values[m * n..(m + 1) * n];
        let mut acc = 0.5 * (row[0] + row[n - 1]);
        for v in &row[1..n - 1] {
            acc += v;
        }
        acc / (n - 1) as f64
    }

    /// Bilinear interpolation at `(t, x)`; errors outside the grid support.
    pub fn interpolate(&self, t: f64, x: f64) -> Result<f64> {
        let slack = 1e-12;
        let (t0, t1) = (self.t[0], *self.t.last().unwrap());
        let (x0, x1) = (self.x[0], *self.x.last().unwrap());
        if t < t0 - slack || t > t1 + slack || x < x0 - slack || x > x1 + slack {
            return Err(Error::Shape(format!(
                "point (t = {t}, x = {x}) lies outside the grid support \
                 [{t0}, {t1}] x [{x0}, {x1}]"
            )));
        }
        let locate = |nodes: &[f64], v: f64| -> (usize, f64) {
            let h = nodes[1] - nodes[0];
            let raw = (v - nodes[0]) / h;
            let i = (raw.floor() as isize).clamp(0, nodes.len() as isize - 2) as usize;
            let w = ((v - nodes[i]) / h).clamp(0.0, 1.0);
            (i, w)
        };
        let (m, wt) = locate(&self.t, t);
        let (j, wx) = locate(&self.x, x);
        let f00 = self.value_at(m, j);
        let f01 = self.value_at(m, j + 1);
        let f10 = self.value_at(m + 1, j);
        let f11 = self.value_at(m + 1, j + 1);
        Ok((1.0 - wt) * ((1.0 - wx) * f00 + wx * f01) + wt * ((1.0 - wx) * f10 + wx * f11))
    }
}

/// Thomas algorithm for a tridiagonal system; `lower[0]` and
/// `upper[n-1]` are ignored. Overwrites `rhs` with the solution.
fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c_star = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Convergence("tridiagonal pivot vanished".into()));
    }
    c_star[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c_star[i - 1];
        if denom == 0.0 {
            return Err(Error::Convergence("tridiagonal pivot vanished".into()));
        }
        c_star[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_star[i] * rhs[i + 1];
    }
    Ok(())
}

/// Solve the penalized forward problem on a 1D interval by a theta-scheme:
///
/// ```text
///   du/dt = 1/2 sigma^2 u_xx + b u_x - grad phi_eps(u)
///           + f(t, x, u, sigma u_x)                       in (x_l, x_r),
///   du/dn + grad psi_eps(u) = g(t, x, u)                  at x_l, x_r,
///   u(0, x) = h(x).
/// ```
///
/// Per time level: the driver `f` is applied explicitly at the previous
/// level; the linear reflection generator is advanced by the theta-scheme
/// (tridiagonal solve, ghost-node Neumann rows with zero flux datum); the
/// boundary flux datum `g - grad psi_eps` enters through a scalar prox step
/// on each boundary value with weight `dt (sigma^2 / hx -+ b)`; finally the
/// stiff `grad phi_eps` acts on every node through an exact backward prox
/// step. The splitting is first order in time, the linear core is second
/// order for theta = 1/2.
pub fn solve_penalized_fd(
    spec: &ProblemSpec,
    eps: f64,
    nx: usize,
    nt: usize,
    theta: f64,
) -> Result<FdGrid> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!(
            "penalization eps must be positive and finite, got {eps}"
        )));
    }
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::Stability(format!(
            "theta-scheme requires theta in [1/2, 1], got {theta}"
        )));
    }
    if nx < 2 || nt < 1 {
        return Err(Error::Precondition(format!(
            "grid must have nx >= 2 and nt >= 1, got nx = {nx}, nt = {nt}"
        )));
    }
    let (xl, xr) = match spec.domain {
        DomainSpec::Interval { x_left, x_right } => (x_left, x_right),
        _ => {
            return Err(Error::Precondition(
                "the finite-difference oracle needs a 1D interval domain".into(),
            ))
        }
    };
    let n = nx + 1;
    let hx = (xr - xl) / nx as f64;
    let dt = spec.horizon / nt as f64;
    let x: Vec<f64> = (0..n).map(|j| xl + j as f64 * hx).collect();
    let t: Vec<f64> = (0..=nt).map(|m| m as f64 * dt).collect();
    let slot_len = spec.coeffs.slot_len();
    let mut slots = vec![0.0; slot_len];

    let mut values = vec![0.0; (nt + 1) * n];
    for j in 0..n {
        values[j] = spec.coeffs.eval_h(&x[j..j + 1]);
    }

    // Coefficient rows at a fixed time.
    let mut sig = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let fill_coeffs = |time: f64, sig: &mut [f64], drift: &mut [f64], slots: &mut [f64]| {
        for j in 0..n {
            spec.coeffs.load_tx(time, &x[j..j + 1], slots);
            let mut s = [0.0];
            spec.coeffs.eval_sigma_diag(slots, &mut s);
            sig[j] = s[0];
            let mut b = [0.0];
            spec.coeffs.eval_b(slots, &mut b);
            drift[j] = b[0];
        }
    };

    let f_active = !spec.coeffs.f.is_zero();
    let g_active = !spec.coeffs.g.is_zero();
    let phi_active = !matches!(spec.phi, ConvexFunction::Zero);
    let psi_active = !matches!(spec.psi, ConvexFunction::Zero);
    let mut max_sig_sq = 0.0f64;

    // Apply the discrete reflection generator to a row: interior central
    // differences, boundary rows from ghost elimination with zero flux.
    let apply_l = |u: &[f64], sig: &[f64], drift: &[f64], out: &mut [f64]| {
        let inv_h2 = 1.0 / (hx * hx);
        out[0] = 0.5 * sig[0] * sig[0] * (2.0 * u[1] - 2.0 * u[0]) * inv_h2;
        out[n - 1] = 0.5 * sig[n - 1] * sig[n - 1] * (2.0 * u[n - 2] - 2.0 * u[n - 1]) * inv_h2;
        for j in 1..n - 1 {
            let diff = 0.5 * sig[j] * sig[j] * (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_h2;
            let conv = drift[j] * (u[j + 1] - u[j - 1]) / (2.0 * hx);
            out[j] = diff + conv;
        }
    };

    let mut rhs = vec![0.0; n];
    let mut lu = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];

    for m in 0..nt {
        let (t_m, t_next) = (t[m], t[m + 1]);
        let (prev, cur) = values.split_at_mut((m + 1) * n);
        let u_prev = &prev[m * n..(m + 1) * n];
        let u_next = &mut cur[..n];

        // Explicit driver with z = sigma u_x at the previous level.
        fill_coeffs(t_m, &mut sig, &mut drift, &mut slots);
        for &s in &sig {
            max_sig_sq = max_sig_sq.max(s * s);
        }
        rhs.copy_from_slice(u_prev);
        if f_active {
            for j in 0..n {
                let ux = if j == 0 {
                    (-3.0 * u_prev[0] + 4.0 * u_prev[1] - u_prev[2]) / (2.0 * hx)
                } else if j == n - 1 {
                    (3.0 * u_prev[n - 1] - 4.0 * u_prev[n - 2] + u_prev[n - 3]) / (2.0 * hx)
                } else {
                    (u_prev[j + 1] - u_prev[j - 1]) / (2.0 * hx)
                };
                spec.coeffs.load_tx(t_m, &x[j..j + 1], &mut slots);
                slots[2] = u_prev[j];
                slots[3] = sig[j] * ux;
                rhs[j] += dt * spec.coeffs.eval_f(&slots);
            }
        }

        // Theta step of the linear part: (I - theta dt L) u* = rhs +
        // (1 - theta) dt L u_prev, with L at the old time on the explicit
        // side and the new time on the implicit side.
        if theta < 1.0 {
            apply_l(u_prev, &sig, &drift, &mut lu);
            for j in 0..n {
                rhs[j] += (1.0 - theta) * dt * lu[j];
            }
        }
        fill_coeffs(t_next, &mut sig, &mut drift, &mut slots);
        let inv_h2 = 1.0 / (hx * hx);
        for j in 0..n {
            let a = 0.5 * sig[j] * sig[j] * inv_h2;
            let c = drift[j] / (2.0 * hx);
            if j == 0 {
                diag[0] = 1.0 + theta * dt * 2.0 * a;
                upper[0] = -theta * dt * 2.0 * a;
                lower[0] = 0.0;
            } else if j == n - 1 {
                diag[j] = 1.0 + theta * dt * 2.0 * a;
                lower[j] = -theta * dt * 2.0 * a;
                upper[j] = 0.0;
            } else {
                lower[j] = -theta * dt * (a - c);
                diag[j] = 1.0 + theta * dt * 2.0 * a;
                upper[j] = -theta * dt * (a + c);
            }
        }
        thomas_solve(&lower, &diag, &upper, &mut rhs)?;
        u_next.copy_from_slice(&rhs);

        // Boundary flux datum: du/dn + grad psi_eps(u) = g enters the
        // boundary rows with weight sigma^2/hx -+ b (from the ghost
        // elimination, drift included because the condition pins u_x).
        // g is explicit at the solved value, grad psi_eps implicit through
        // the exact prox step.
        if psi_active || g_active {
            for (j, side) in [(0usize, -1.0f64), (n - 1, 1.0)] {
                let c_b = (sig[j] * sig[j] / hx + side * drift[j]).max(0.0);
                let w = dt * c_b;
                if w == 0.0 {
                    continue;
                }
                let mut v = u_next[j];
                if g_active {
                    spec.coeffs.load_tx(t_next, &x[j..j + 1], &mut slots);
                    slots[2] = v;
                    v += w * spec.coeffs.eval_g(&slots);
                }
                u_next[j] = spec.psi.backward_prox_step(eps, w, v)?;
            }
        }

        // Exact prox split for the interior potential, every node.
        if phi_active {
            for u in u_next.iter_mut() {
                *u = spec.phi.backward_prox_step(eps, dt, *u)?;
            }
        }
    }

    let courant = (1.0 - theta) * dt * max_sig_sq / (hx * hx);
    Ok(FdGrid {
        x,
        t,
        values,
        theta,
        courant,
    })
}

/// How the deterministic integrator treats the interior potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialMode {
    /// Yosida penalization at the given `eps`, like the main pipeline.
    Prox { eps: f64 },
    /// Exact multivalued mode for indicator potentials: active-set
    /// switching with the flux recovered from the balance equation.
    ExactIndicator,
}

/// Deterministic backward trajectory `(t_k, X_k, Y_k, U_k)` for `sigma = 0`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// Flattened path, `x[k * dim + c]`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Interior flux along the trajectory: `grad phi_eps(Y_k)` in prox mode,
    /// the exact balancing subgradient in exact mode.
    pub u: Vec<f64>,
}

/// Clamp of an indicator's domain, used by the exact active-set mode.
fn indicator_bounds(phi: &ConvexFunction) -> Option<(f64, f64)> {
    match *phi {
        ConvexFunction::Zero => Some((f64::NEG_INFINITY, f64::INFINITY)),
        ConvexFunction::HalfLineLower { a } => Some((a, f64::INFINITY)),
        ConvexFunction::HalfLineUpper { b } => Some((f64::NEG_INFINITY, b)),
        ConvexFunction::Interval { a, b } => Some((a, b)),
        _ => None,
    }
}

/// Solve `y = target + weight * f(t_avg, x, (y + y_known)/2-style args)` for
/// the trapezoidal driver step: the implicit half of the driver is resolved
/// by Picard with a bisection fallback. `eval` maps a candidate `y` to the
/// full right-hand side.
fn solve_scalar(eval: &mut dyn FnMut(f64) -> Result<f64>, start: f64) -> Result<f64> {
    let mut y = start;
    let mut prev = f64::INFINITY;
    for _ in 0..SCALAR_MAX_ITER {
        let next = eval(y)?;
        let gap = (next - y).abs();
        y = next;
        if gap <= SCALAR_TOL * (1.0 + y.abs()) {
            return Ok(y);
        }
        if gap >= 0.5 * prev && prev.is_finite() {
            break;
        }
        prev = gap;
    }
    // Bisection on r(y) = y - eval(y), expanding the bracket geometrically.
    let mut r_at = |v: f64| -> Result<f64> { Ok(v - eval(v)?) };
    let mut radius = 0.5 * (1.0 + y.abs());
    let (mut lo, mut hi) = (y - radius, y + radius);
    let (mut rlo, mut rhi) = (r_at(lo)?, r_at(hi)?);
    let mut tries = 0;
    while rlo > 0.0 || rhi < 0.0 {
        tries += 1;
        if tries > 100 {
            return Err(Error::Convergence(
                "scalar driver step found no sign change".into(),
            ));
        }
        radius *= 2.0;
        if rlo > 0.0 {
            lo = y - radius;
            rlo = r_at(lo)?;
        }
        if rhi < 0.0 {
            hi = y + radius;
            rhi = r_at(hi)?;
        }
    }
    for _ in 0..SCALAR_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let rm = r_at(mid)?;
        if rm.abs() <= SCALAR_TOL * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        if rm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Convergence(
        "scalar driver step did not reach tolerance".into(),
    ))
}

/// Integrate the zero-noise backward problem from `xi = h(X_T)` down to 0.
///
/// The forward path follows `dX = b dt` with projection onto the closure
/// (no noise means no boundary local time unless the drift actually pushes
/// outward). The backward sweep applies the trapezoidal rule to the driver
/// and either an exact prox split (`Prox`) or active-set switching
/// (`ExactIndicator`, indicator potentials only, boundary potential must
/// stay inactive) per step.
pub fn solve_deterministic_vi(
    spec: &ProblemSpec,
    x0: &[f64],
    mode: PotentialMode,
    nt: usize,
) -> Result<Trajectory> {
    if !spec.coeffs.sigma.is_zero() {
        return Err(Error::Precondition(
            "the deterministic integrator requires sigma identically zero".into(),
        ));
    }
    if nt < 1 {
        return Err(Error::Precondition("nt must be at least 1".into()));
    }
    let d = spec.domain.dim();
    if x0.len() != d {
        return Err(Error::Shape(format!(
            "start point has dim {}, problem has dim {d}",
            x0.len()
        )));
    }
    if let PotentialMode::Prox { eps } = mode {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!(
                "penalization eps must be positive and finite, got {eps}"
            )));
        }
    }
    let dt = spec.horizon / nt as f64;
    let t: Vec<f64> = (0..=nt).map(|k| k as f64 * dt).collect();
    let slot_len = spec.coeffs.slot_len();
    let mut slots = vec![0.0; slot_len];

    // Forward path with projection; local time accumulates projection
    // distances exactly as in the probabilistic scheme's convention.
    let mut xs = vec![0.0; (nt + 1) * d];
    let mut da = vec![0.0; nt];
    xs[..d].copy_from_slice(x0);
    let mut state = x0.to_vec();
    let mut b = vec![0.0; d];
    for k in 0..nt {
        spec.coeffs.load_tx(t[k], &state, &mut slots);
        spec.coeffs.eval_b(&slots, &mut b);
        for c in 0..d {
            state[c] += dt * b[c];
        }
        if spec.domain.level(&state) > 0.0 {
            da[k] = spec.domain.project_onto_boundary(&mut state)?;
        }
        xs[(k + 1) * d..(k + 2) * d].copy_from_slice(&state);
    }

    let mut y = vec![0.0; nt + 1];
    let mut u = vec![0.0; nt + 1];
    y[nt] = spec.coeffs.eval_h(&xs[nt * d..(nt + 1) * d]);

    let f_active = !spec.coeffs.f.is_zero();
    let g_active = !spec.coeffs.g.is_zero();

    for k in (0..nt).rev() {
        let x_k = &xs[k * d..(k + 1) * d];
        let x_k1 = &xs[(k + 1) * d..(k + 2) * d];
        // Trapezoidal driver step: the explicit half reads the known level.
        let mut base = y[k + 1];
        if f_active {
            spec.coeffs.load_tx(t[k + 1], x_k1, &mut slots);
            slots[1 + d] = y[k + 1];
            base += 0.5 * dt * spec.coeffs.eval_f(&slots);
        }
        if g_active && da[k] > 0.0 {
            spec.coeffs.load_tx(t[k + 1], x_k1, &mut slots);
            slots[1 + d] = y[k + 1];
            base += 0.5 * da[k] * spec.coeffs.eval_g(&slots);
        }
        let half = |slots: &mut [f64], yy: f64| -> Result<f64> {
            let mut acc = base;
            if f_active {
                spec.coeffs.load_tx(t[k], x_k, slots);
                slots[1 + d] = yy;
                acc += 0.5 * dt * spec.coeffs.eval_f(slots);
            }
            if g_active && da[k] > 0.0 {
                spec.coeffs.load_tx(t[k], x_k, slots);
                slots[1 + d] = yy;
                acc += 0.5 * da[k] * spec.coeffs.eval_g(slots);
            }
            Ok(acc)
        };

        match mode {
            PotentialMode::Prox { eps } => {
                // Split: implicit trapezoid driver step, then exact prox of
                // both potentials (composed; psi only on local-time mass).
                let mut eval = |yy: f64| half(&mut slots, yy);
                let target = solve_scalar(&mut eval, y[k + 1])?;
                let after_phi = spec.phi.backward_prox_step(eps, dt, target)?;
                let after_psi = if da[k] > 0.0 {
                    spec.psi.backward_prox_step(eps, da[k], after_phi)?
                } else {
                    after_phi
                };
                y[k] = after_psi;
                u[k] = spec.phi.yosida(eps, y[k]);
            }
            PotentialMode::ExactIndicator => {
                let (lo_b, hi_b) = indicator_bounds(&spec.phi).ok_or_else(|| {
                    Error::Precondition(
                        "exact mode needs an indicator (or zero) interior potential".into(),
                    )
                })?;
                if da[k] > 0.0 && !matches!(spec.psi, ConvexFunction::Zero) {
                    return Err(Error::Precondition(
                        "exact mode cannot combine boundary local time with \
                         an active boundary potential"
                            .into(),
                    ));
                }
                let mut eval = |yy: f64| half(&mut slots, yy);
                let unconstrained = solve_scalar(&mut eval, y[k + 1])?;
                if unconstrained < lo_b {
                    // Constraint active from below: pin y and read the flux
                    // off the balance y + dt u = rhs(y).
                    y[k] = lo_b;
                    u[k] = (half(&mut slots, lo_b)? - lo_b) / dt;
                } else if unconstrained > hi_b {
                    y[k] = hi_b;
                    u[k] = (half(&mut slots, hi_b)? - hi_b) / dt;
                } else {
                    y[k] = unconstrained;
                    u[k] = 0.0;
                }
            }
        }
    }
    // Terminal flux for reporting symmetry.
    u[nt] = match mode {
        PotentialMode::Prox { eps } => spec.phi.yosida(eps, y[nt]),
        PotentialMode::ExactIndicator => 0.0,
    };

    Ok(Trajectory { t, x: xs, y, u })
}

/// One row of a pointwise comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub diff: f64,
}

/// Error norms between two sampled objects.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub sup_norm: f64,
    /// Root mean square of the nodewise differences.
    pub l2_norm: f64,
    pub rows: Vec<ComparisonRow>,
}

fn report_from_rows(rows: Vec<ComparisonRow>) -> ComparisonReport {
    let mut sup = 0.0f64;
    let mut sumsq = 0.0;
    for r in &rows {
        sup = sup.max(r.diff.abs());
        sumsq += r.diff * r.diff;
    }
    let l2 = if rows.is_empty() {
        0.0
    } else {
        (sumsq / rows.len() as f64).sqrt()
    };
    ComparisonReport {
        sup_norm: sup,
        l2_norm: l2,
        rows,
    }
}

/// Compare a finite-difference grid against point samples `(t, x, value)`,
/// interpolating the grid at each sample location.
pub fn compare_grid_to_samples(
    grid: &FdGrid,
    samples: &[(f64, f64, f64)],
) -> Result<ComparisonReport> {
    if samples.is_empty() {
        return Err(Error::Shape("no samples to compare against".into()));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for &(t, x, v) in samples {
        let g = grid.interpolate(t, x)?;
        rows.push(ComparisonRow {
            t,
            x,
            a: g,
            b: v,
            diff: g - v,
        });
    }
    Ok(report_from_rows(rows))
}

/// Compare two trajectories on the union of their time nodes restricted to
/// the overlap of their spans, interpolating each linearly in time.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory) -> Result<ComparisonReport> {
    let (a0, a1) = (a.t[0], *a.t.last().unwrap());
    let (b0, b1) = (b.t[0], *b.t.last().unwrap());
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if !(lo <= hi) {
        return Err(Error::Shape(format!(
            "trajectory spans [{a0}, {a1}] and [{b0}, {b1}] do not overlap"
        )));
    }
    let mut nodes: Vec<f64> = a
        .t
        .iter()
        .chain(b.t.iter())
        .copied()
        .filter(|&v| v >= lo && v <= hi)
        .collect();
    nodes.sort_by(|p, q| p.partial_cmp(q).unwrap());
    nodes.dedup();
    let interp = |tr: &Trajectory, t: f64| -> f64 {
        match tr.t.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => tr.y[i],
            Err(i) => {
                let i = i.clamp(1, tr.t.len() - 1);
                let w = (t - tr.t[i - 1]) / (tr.t[i] - tr.t[i - 1]);
                (1.0 - w) * tr.y[i - 1] + w * tr.y[i]
            }
        }
    };
    let rows = nodes
        .into_iter()
        .map(|t| {
            let va = interp(a, t);
            let vb = interp(b, t);
            ComparisonRow {
                t,
                x: f64::NAN,
                a: va,
                b: vb,
                diff: va - vb,
            }
        })
        .collect();
    Ok(report_from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        AssumptionConstants, CoeffFn, Coefficients, SigmaCoeff, ValidationRanges,
    };

    fn interval_spec(
        sigma: SigmaCoeff,
        b: CoeffFn,
        f: CoeffFn,
        g: CoeffFn,
        h: CoeffFn,
        phi: ConvexFunction,
        psi: ConvexFunction,
        horizon: f64,
    ) -> ProblemSpec {
        let coeffs = Coefficients {
            dim: 1,
            b: vec![b],
            sigma,
            f,
            g,
            h,
            reversed_at: None,
        };
        ProblemSpec::new(
            DomainSpec::interval(0.0, 1.0).unwrap(),
            coeffs,
            phi,
            psi,
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
    fn series_handles_constant_and_single_modes() {
        let one = neumann_heat_series(0.37, 2.1, &[1.0], 8);
        assert_eq!(one.value, 1.0);
        assert_eq!(one.tail_bound, 0.0);

        let at_zero = neumann_heat_series(0.3, 0.0, &[0.0, 1.0], 8);
        assert!((at_zero.value - (std::f64::consts::PI * 0.3).cos()).abs() < 1e-15);

        // Frozen benchmark value: exp(-pi^2/4) cos(pi/4).
        let bench = neumann_heat_series(0.25, 0.5, &[0.0, 1.0], 8);
        assert!(
            (bench.value - 0.05996617111266305).abs() < 1e-15,
            "got {}",
            bench.value
        );
    }

    #[test]
    fn series_terms_decay_at_the_exact_rate() {
        let dt = 0.05;
        for k in 1..5usize {
            let mut coeffs = vec![0.0; k + 1];
            coeffs[k] = 1.0;
            let x = 0.11;
            let v0 = neumann_heat_series(x, 0.3, &coeffs, k + 1).value;
            let v1 = neumann_heat_series(x, 0.3 + dt, &coeffs, k + 1).value;
            let expected = (-0.5 * (k as f64 * std::f64::consts::PI).powi(2) * dt).exp();
            assert!(
                (v1 / v0 - expected).abs() < 1e-12,
                "mode {k}: ratio {} vs {expected}",
                v1 / v0
            );
        }
    }

    #[test]
    fn series_reports_the_truncation_tail() {
        let coeffs = [0.0, 1.0, 0.5, 0.25];
        let full = neumann_heat_series(0.4, 0.2, &coeffs, 4);
        let cut = neumann_heat_series(0.4, 0.2, &coeffs, 2);
        assert_eq!(full.tail_bound, 0.0);
        assert!(cut.tail_bound > 0.0);
        assert!((full.value - cut.value).abs() <= cut.tail_bound + 1e-15);
    }

    #[test]
    fn fd_matches_the_series_on_the_heat_benchmark() {
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            0.5,
        );
        let grid = solve_penalized_fd(&spec, 1e-3, 200, 400, 0.5).unwrap();
        let mut worst = 0.0f64;
        for m in [100, 200, 400] {
            for j in [0, 37, 100, 163, 200] {
                let exact = neumann_heat_series(grid.x[j], grid.t[m], &[0.0, 1.0], 4).value;
                worst = worst.max((grid.value_at(m, j) - exact).abs());
            }
        }
        assert!(worst < 1e-3, "worst nodewise gap {worst}");
    }

    #[test]
    fn fd_conserves_the_spatial_mean_without_sources() {
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1) + 0.3", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            0.5,
        );
        let grid = solve_penalized_fd(&spec, 1e-3, 64, 80, 1.0).unwrap();
        let mut prev = grid.spatial_mean(0);
        assert!((prev - 0.3).abs() < 1e-3, "cosine mean is the offset");
        for m in 1..=80 {
            let mean = grid.spatial_mean(m);
            assert!(
                (mean - prev).abs() < 1e-10,
                "mean drifted by {} at level {m}",
                mean - prev
            );
            prev = mean;
        }
    }

    #[test]
    fn fd_backward_euler_is_first_order_in_time() {
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            0.5,
        );
        let sup_err = |nt: usize| -> f64 {
            let grid = solve_penalized_fd(&spec, 1e-3, 400, nt, 1.0).unwrap();
            let mut worst = 0.0f64;
            for j in (0..=400).step_by(40) {
                let exact = neumann_heat_series(grid.x[j], 0.5, &[0.0, 1.0], 4).value;
                worst = worst.max((grid.value_at(nt, j) - exact).abs());
            }
            worst
        };
        let coarse = sup_err(50);
        let fine = sup_err(100);
        let ratio = coarse / fine;
        assert!(
            (1.6..=2.5).contains(&ratio),
            "halving dt should halve the error: {coarse} / {fine} = {ratio}"
        );
    }

    #[test]
    fn fd_penalized_obstacle_stays_within_eps_of_zero() {
        let eps = 1e-4;
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Const(-1.0),
            CoeffFn::Zero,
            CoeffFn::Zero,
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            0.5,
        );
        let grid = solve_penalized_fd(&spec, eps, 50, 200, 1.0).unwrap();
        for m in 0..=200 {
            for j in 0..=50 {
                let v = grid.value_at(m, j);
                assert!(v <= 1e-12, "penalized solution cannot exceed 0, got {v}");
                assert!(v >= -2.0 * eps, "drop below -2 eps at ({m}, {j}): {v}");
                assert!(v >= -eps.sqrt(), "square-root envelope violated");
            }
        }
    }

    #[test]
    fn fd_rejects_unstable_theta_and_wrong_domains() {
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            0.5,
        );
        assert!(matches!(
            solve_penalized_fd(&spec, 1e-3, 10, 10, 0.25),
            Err(Error::Stability(_))
        ));
        assert!(matches!(
            solve_penalized_fd(&spec, -1.0, 10, 10, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic_linear_driver_matches_the_exponential() {
        let spec = interval_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            CoeffFn::Zero,
            expr("0 - y", crate::expr::VarScope::full()),
            CoeffFn::Zero,
            CoeffFn::Const(1.0),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            1.0,
        );
        let tr =
            solve_deterministic_vi(&spec, &[0.5], PotentialMode::Prox { eps: 1e-3 }, 10_000)
                .unwrap();
        for (k, &tk) in tr.t.iter().enumerate() {
            let exact = (-(1.0 - tk)).exp();
            assert!(
                (tr.y[k] - exact).abs() < 1e-8,
                "t = {tk}: {} vs {exact}",
                tr.y[k]
            );
        }
    }

    #[test]
    fn deterministic_obstacle_exact_mode_recovers_the_multival_flux() {
        let spec = interval_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            CoeffFn::Zero,
            CoeffFn::Const(-1.0),
            CoeffFn::Zero,
            CoeffFn::Zero,
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            1.0,
        );
        let tr =
            solve_deterministic_vi(&spec, &[0.5], PotentialMode::ExactIndicator, 500).unwrap();
        for k in 0..500 {
            assert_eq!(tr.y[k], 0.0, "state pinned at the obstacle");
            assert_eq!(tr.u[k], -1.0, "flux balances the drive exactly");
        }
        assert_eq!(tr.y[500], 0.0);
    }

    #[test]
    fn deterministic_terminal_on_the_constraint_is_stationary() {
        let spec = interval_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            1.0,
        );
        for mode in [PotentialMode::ExactIndicator, PotentialMode::Prox { eps: 1e-6 }] {
            let tr = solve_deterministic_vi(&spec, &[0.5], mode, 100).unwrap();
            for &v in &tr.y {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn prox_and_exact_modes_agree_at_the_square_root_rate_or_better() {
        let spec = interval_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            CoeffFn::Zero,
            CoeffFn::Const(-1.0),
            CoeffFn::Zero,
            CoeffFn::Zero,
            ConvexFunction::half_line_lower(0.0).unwrap(),
            ConvexFunction::Zero,
            1.0,
        );
        let exact =
            solve_deterministic_vi(&spec, &[0.5], PotentialMode::ExactIndicator, 400).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let prox =
                solve_deterministic_vi(&spec, &[0.5], PotentialMode::Prox { eps }, 400).unwrap();
            let gap = compare_trajectories(&exact, &prox).unwrap().sup_norm;
            assert!(gap > 0.0);
            xs.push(eps.ln());
            ys.push(gap.ln());
        }
        let slope = crate::stats::fit_slope(&xs, &ys).unwrap();
        assert!(
            slope >= 0.3,
            "prox-exact agreement slower than the square-root rate: slope {slope}"
        );
    }

    #[test]
    fn comparisons_report_zero_offset_and_disjoint_cases() {
        let spec = interval_spec(
            SigmaCoeff::ConstDiagonal(0.0),
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Const(0.4),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            1.0,
        );
        let a = solve_deterministic_vi(&spec, &[0.5], PotentialMode::Prox { eps: 1e-3 }, 50)
            .unwrap();
        let same = compare_trajectories(&a, &a).unwrap();
        assert_eq!(same.sup_norm, 0.0);
        assert_eq!(same.l2_norm, 0.0);

        let mut shifted = a.clone();
        for v in shifted.y.iter_mut() {
            *v += 1.0;
        }
        let off = compare_trajectories(&a, &shifted).unwrap();
        assert!((off.sup_norm - 1.0).abs() < 1e-15);

        let mut late = a.clone();
        for v in late.t.iter_mut() {
            *v += 5.0;
        }
        assert!(matches!(
            compare_trajectories(&a, &late),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn grid_sample_comparison_interpolates_and_guards_support() {
        let spec = interval_spec(
            SigmaCoeff::Identity,
            CoeffFn::Zero,
            CoeffFn::Zero,
            CoeffFn::Zero,
            expr("cos(3.141592653589793 * x1)", crate::expr::VarScope::space_only()),
            ConvexFunction::Zero,
            ConvexFunction::Zero,
            0.5,
        );
        let grid = solve_penalized_fd(&spec, 1e-3, 100, 100, 0.5).unwrap();
        let exact = neumann_heat_series(0.25, 0.5, &[0.0, 1.0], 4).value;
        let report = compare_grid_to_samples(&grid, &[(0.5, 0.25, exact)]).unwrap();
        assert!(report.sup_norm < 1e-3);
        assert!(matches!(
            compare_grid_to_samples(&grid, &[(2.0, 0.25, 0.0)]),
            Err(Error::Shape(_))
        ));
    }
}
