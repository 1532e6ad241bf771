//! Executable checks on solved fields: ABP margins, maximum/comparison
//! principles, oscillation decay, regularity-exponent fits, jump-condition
//! accuracy, viscosity-inequality audits, barrier validations, and the
//! second-order matrix relations at the interface.
//!
//! Checkers are read-only on their inputs and return serializable reports,
//! so independent checks may run concurrently; fitted constants are
//! empirical suite outputs, never asserted against theoretical values.

use crate::envelopes::{contact_set, convex_envelope, default_contact_tol, Patch2};
use crate::error::CoreError;
use crate::geometry::InterfaceGraph;
use crate::grid::{
    discretize_interior, discretize_interior_ghosted, one_sided_vertical, Grid, GridField,
    JumpGhosts, NodeClass, ScalarField, StencilScheme, TransmissionProblem,
};
use crate::matrix::SymMatrix;
use crate::operators::EllipticOperator;
use crate::solve::{solve, solve_masked, SolveParams};
use serde::Serialize;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

/// Discrete L^n norm: (h^n sum |v|^n)^(1/n) over the given nodes.
fn ln_norm(grid: &Grid, nodes: impl Iterator<Item = usize>, f: impl Fn(usize) -> f64) -> f64 {
    let n = grid.n as i32;
    let hn = grid.h.powi(n);
    let sum: f64 = nodes.map(|i| f(i).abs().powi(n)).sum();
    (hn * sum).powf(1.0 / n as f64)
}

/// Ordinary least squares of y against x; returns (slope, intercept, r2).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Solves the normal equations A^T A x = A^T b by Cholesky; on (near) rank
/// deficiency a small ridge is added, which selects a minimal-norm-flavored
/// solution.
fn solve_normal_equations(m: usize, ata: &mut [f64], atb: &[f64]) -> Vec<f64> {
    let max_diag = (0..m).map(|i| ata[i * m + i]).fold(0.0f64, f64::max);
    for attempt in 0..4 {
        let ridge = if attempt == 0 { 0.0 } else { 1e-12 * max_diag * 10f64.powi(attempt) };
        let mut l = vec![0.0; m * m];
        let mut ok = true;
        'outer: for i in 0..m {
            for j in 0..=i {
                let mut s = ata[i * m + j] + if i == j { ridge } else { 0.0 };
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                if i == j {
                    if s <= 1e-300 {
                        ok = false;
                        break 'outer;
                    }
                    l[i * m + i] = s.sqrt();
                } else {
                    l[i * m + j] = s / l[j * m + j];
                }
            }
        }
        if !ok {
            continue;
        }
        // forward/back substitution
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut s = atb[i];
            for k in 0..i {
                s -= l[i * m + k] * y[k];
            }
            y[i] = s / l[i * m + i];
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = y[i];
            for k in (i + 1)..m {
                s -= l[k * m + i] * x[k];
            }
            x[i] = s / l[i * m + i];
        }
        return x;
    }
    vec![0.0; m]
}

// ---------------------------------------------------------------------------
// ABP
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct AbpContact {
    pub f_minus_ln: f64,
    pub f_plus_ln: f64,
    pub fitted_c: f64,
    pub contact_nodes: usize,
    pub interface_contact_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AbpReport {
    /// sup of u_- over the ball.
    pub lhs: f64,
    /// sup of u_- over the discrete boundary shell of the ball.
    pub boundary_sup: f64,
    pub max_g_plus: f64,
    pub f_minus_ln: f64,
    pub f_plus_ln: f64,
    /// Smallest C with lhs <= boundary_sup + C (max g_+ + f-norms).
    pub fitted_c: f64,
    pub inner_radius: f64,
    pub contact: Option<AbpContact>,
}

fn fitted_constant(lhs: f64, boundary_sup: f64, denom: f64) -> f64 {
    let excess = (lhs - boundary_sup).max(0.0);
    if denom > 1e-14 {
        excess / denom
    } else if excess <= 1e-12 * (1.0 + lhs.abs()) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Measures the ABP inequality
/// `sup_B u_- <= sup_shell u_- + C (max_Gamma g_+ + ||f_+^-||_{L^n} + ||f_+^+||_{L^n})`
/// on the ball of radius `inner_radius` centered at the origin.  With
/// `use_contact_set` (flat interface, n = 2) the f-norms are additionally
/// restricted to the contact set of u - max g_+ |x_n| with its convex
/// envelope, the field extended by zero outside the ball.
pub fn check_abp(
    problem: &TransmissionProblem,
    solution: &GridField,
    inner_radius: f64,
    use_contact_set: bool,
) -> Result<AbpReport, CoreError> {
    let grid = &solution.grid;
    if inner_radius <= 4.0 * grid.h || inner_radius > 1.0 + 1e-12 {
        return Err(CoreError::InvalidInput("abp ball must satisfy 4h < r <= 1".into()));
    }
    let center = [0.0; 3];
    let ball = grid.nodes_in_ball(&center, inner_radius);
    let radius_of = |idx: usize| -> f64 {
        let x = grid.coords(idx);
        (0..grid.n).map(|a| x[a] * x[a]).sum::<f64>().sqrt()
    };
    let u_minus = |idx: usize| (-solution.value(idx)).max(0.0);
    let lhs = ball.iter().map(|&i| u_minus(i)).fold(0.0f64, f64::max);
    let shell_lo = inner_radius - 1.5 * grid.h;
    let boundary_sup = ball
        .iter()
        .filter(|&&i| radius_of(i) > shell_lo)
        .map(|&i| u_minus(i))
        .fold(0.0f64, f64::max);
    let max_g_plus = grid
        .interface_nodes()
        .iter()
        .filter(|d| {
            let g = d.gamma;
            (0..grid.n).map(|a| g[a] * g[a]).sum::<f64>().sqrt() <= inner_radius
        })
        .map(|d| problem.g.eval(&d.gamma).max(0.0))
        .fold(0.0f64, f64::max);
    let f_minus_ln = ln_norm(
        grid,
        ball.iter().copied().filter(|&i| grid.class(i) == NodeClass::InteriorMinus),
        |i| problem.f_minus.eval(&grid.coords(i)).max(0.0),
    );
    let f_plus_ln = ln_norm(
        grid,
        ball.iter().copied().filter(|&i| grid.class(i) == NodeClass::InteriorPlus),
        |i| problem.f_plus.eval(&grid.coords(i)).max(0.0),
    );
    let fitted_c = fitted_constant(lhs, boundary_sup, max_g_plus + f_minus_ln + f_plus_ln);

    let contact = if use_contact_set {
        if grid.n != 2 || !problem.iface.is_flat() {
            return Err(CoreError::InvalidInput(
                "contact-set refinement needs a flat interface in 2D".into(),
            ));
        }
        Some(contact_restricted(problem, solution, inner_radius, lhs, boundary_sup, max_g_plus)?)
    } else {
        None
    };

    Ok(AbpReport {
        lhs,
        boundary_sup,
        max_g_plus,
        f_minus_ln,
        f_plus_ln,
        fitted_c,
        inner_radius,
        contact,
    })
}

fn contact_restricted(
    problem: &TransmissionProblem,
    solution: &GridField,
    r: f64,
    lhs: f64,
    boundary_sup: f64,
    max_g_plus: f64,
) -> Result<AbpContact, CoreError> {
    let grid = &solution.grid;
    let dims = grid.dims();
    // patch: grid-aligned square covering the ball, extended (by zero values)
    // up to twice the radius where the domain allows
    let ext = (2.0 * r).min(1.0);
    let ri = (ext / grid.h).floor() as i64;
    let ic = (dims[0] as i64 - 1) / 2;
    let span = (2 * ri + 1) as usize;
    let mut values = vec![0.0; span * span];
    let mut patch_nodes = vec![usize::MAX; span * span];
    for pj in 0..span {
        for pi in 0..span {
            let i = ic - ri + pi as i64;
            let j = ic - ri + pj as i64;
            let idx = (i + dims[0] as i64 * j) as usize;
            let x = grid.coords(idx);
            let in_ball = (x[0] * x[0] + x[1] * x[1]).sqrt() <= r + 1e-14;
            let p = pi + span * pj;
            patch_nodes[p] = idx;
            if in_ball {
                let v = solution.value(idx) - max_g_plus * x[1].abs();
                values[p] = v.min(0.0);
            } else {
                values[p] = 0.0;
            }
        }
    }
    let patch = Patch2::new(span, span, values.clone())?;
    let env = convex_envelope(&patch)?;
    let tol = default_contact_tol(&values);
    let contact = contact_set(&values, &env, tol);
    let in_contact: std::collections::HashSet<usize> =
        contact.iter().map(|&p| patch_nodes[p]).collect();
    let interface_contact_nodes = grid
        .interface_nodes()
        .iter()
        .filter(|d| {
            let x = grid.coords(d.node);
            in_contact.contains(&d.node) && (x[0] * x[0] + x[1] * x[1]).sqrt() <= r - grid.h
        })
        .count();
    let ball = grid.nodes_in_ball(&[0.0; 3], r);
    let f_minus_ln = ln_norm(
        grid,
        ball.iter()
            .copied()
            .filter(|&i| grid.class(i) == NodeClass::InteriorMinus && in_contact.contains(&i)),
        |i| problem.f_minus.eval(&grid.coords(i)).max(0.0),
    );
    let f_plus_ln = ln_norm(
        grid,
        ball.iter()
            .copied()
            .filter(|&i| grid.class(i) == NodeClass::InteriorPlus && in_contact.contains(&i)),
        |i| problem.f_plus.eval(&grid.coords(i)).max(0.0),
    );
    let fitted_c = fitted_constant(lhs, boundary_sup, max_g_plus + f_minus_ln + f_plus_ln);
    Ok(AbpContact {
        f_minus_ln,
        f_plus_ln,
        fitted_c,
        contact_nodes: contact.len(),
        interface_contact_nodes,
    })
}

// ---------------------------------------------------------------------------
// Maximum principle and comparison
// ---------------------------------------------------------------------------

/// For problems with f = 0, g <= 0 and boundary >= 0 the solution must be
/// nonnegative; returns the worst undershoot min_u.  Inputs violating the
/// hypotheses are rejected.
pub fn check_maximum_principle(
    problem: &TransmissionProblem,
    solution: &GridField,
) -> Result<f64, CoreError> {
    let grid = &solution.grid;
    let tol = 1e-13;
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        match grid.class(idx) {
            NodeClass::InteriorPlus => {
                if problem.f_plus.eval(&x).abs() > tol {
                    return Err(CoreError::HypothesisViolated("f_plus must vanish".into()));
                }
            }
            NodeClass::InteriorMinus => {
                if problem.f_minus.eval(&x).abs() > tol {
                    return Err(CoreError::HypothesisViolated("f_minus must vanish".into()));
                }
            }
            NodeClass::Boundary => {
                if problem.boundary.eval(&x) < -tol {
                    return Err(CoreError::HypothesisViolated(
                        "boundary data must be nonnegative".into(),
                    ));
                }
            }
            NodeClass::Interface => {}
        }
    }
    for d in grid.interface_nodes() {
        if problem.g.eval(&d.gamma) > tol {
            return Err(CoreError::HypothesisViolated("g must be nonpositive".into()));
        }
    }
    Ok(solution.values().iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Report of a comparison-principle run.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// max over nodes of (u_sub - u_super); nonpositive up to solver noise
    /// when the comparison principle holds.
    pub worst_violation: f64,
    pub effective_tolerance: f64,
}

/// Solves both problems and measures the comparison principle.  The data
/// must be ordered so the first problem's solution sits below: f_sub >=
/// f_super, g_sub >= g_super pointwise and boundary_sub <= boundary_super
/// (larger right-hand sides and larger jumps push solutions down).
pub fn check_comparison(
    problem_sub: &TransmissionProblem,
    problem_super: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<ComparisonReport, CoreError> {
    let tol = 1e-13;
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        match grid.class(idx) {
            NodeClass::InteriorPlus => {
                if problem_sub.f_plus.eval(&x) < problem_super.f_plus.eval(&x) - tol {
                    return Err(CoreError::HypothesisViolated("need f_sub >= f_super".into()));
                }
            }
            NodeClass::InteriorMinus => {
                if problem_sub.f_minus.eval(&x) < problem_super.f_minus.eval(&x) - tol {
                    return Err(CoreError::HypothesisViolated("need f_sub >= f_super".into()));
                }
            }
            NodeClass::Boundary => {
                if problem_sub.boundary.eval(&x) > problem_super.boundary.eval(&x) + tol {
                    return Err(CoreError::HypothesisViolated(
                        "need boundary_sub <= boundary_super".into(),
                    ));
                }
            }
            NodeClass::Interface => {}
        }
    }
    for d in grid.interface_nodes() {
        if problem_sub.g.eval(&d.gamma) < problem_super.g.eval(&d.gamma) - tol {
            return Err(CoreError::HypothesisViolated("need g_sub >= g_super".into()));
        }
    }
    let sub = solve(problem_sub, grid, scheme, params)?;
    let sup = solve(problem_super, grid, scheme, params)?;
    if !sub.converged || !sup.converged {
        return Err(CoreError::NonConvergence {
            residual: sub
                .residual_history
                .last()
                .copied()
                .unwrap_or(f64::NAN)
                .max(sup.residual_history.last().copied().unwrap_or(f64::NAN)),
            sweeps: sub.sweeps.max(sup.sweeps),
        });
    }
    let worst = grid
        .node_indices()
        .map(|i| sub.field.value(i) - sup.field.value(i))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonReport {
        worst_violation: worst,
        effective_tolerance: sub.effective_tolerance.max(sup.effective_tolerance),
    })
}

// ---------------------------------------------------------------------------
// Oscillation decay
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct OscillationReport {
    pub osc_inner: f64,
    pub osc_outer: f64,
    /// ||g||_inf(Gamma cap B_r) + ||f^-||_{L^n} + ||f^+||_{L^n} over the ball.
    pub data_term: f64,
    /// (osc_inner - suite_c * data_term) / osc_outer.
    pub mu_hat: f64,
    pub radius: f64,
    pub suite_c: f64,
}

/// Oscillation decay between B_r(center) and B_{r/3}(center), the data term
/// discounted with the suite ABP constant.
pub fn measure_oscillation_decay(
    problem: &TransmissionProblem,
    solution: &GridField,
    center: &[f64; 3],
    radius: f64,
    suite_c: f64,
) -> Result<OscillationReport, CoreError> {
    let grid = &solution.grid;
    if radius / 3.0 < 2.0 * grid.h {
        return Err(CoreError::InsufficientResolution(format!(
            "inner ball diameter {:.3e} is below 4h",
            2.0 * radius / 3.0
        )));
    }
    let outer = grid.nodes_in_ball(center, radius);
    let inner = grid.nodes_in_ball(center, radius / 3.0);
    let osc_outer = solution.oscillation(&outer);
    let osc_inner = solution.oscillation(&inner);
    let g_sup = grid
        .interface_nodes()
        .iter()
        .filter(|d| {
            (0..grid.n).map(|a| (d.gamma[a] - center[a]).powi(2)).sum::<f64>().sqrt() <= radius
        })
        .map(|d| problem.g.eval(&d.gamma).abs())
        .fold(0.0f64, f64::max);
    let f_minus = ln_norm(
        grid,
        outer.iter().copied().filter(|&i| grid.class(i) == NodeClass::InteriorMinus),
        |i| problem.f_minus.eval(&grid.coords(i)),
    );
    let f_plus = ln_norm(
        grid,
        outer.iter().copied().filter(|&i| grid.class(i) == NodeClass::InteriorPlus),
        |i| problem.f_plus.eval(&grid.coords(i)),
    );
    let data_term = g_sup + f_minus + f_plus;
    let mu_hat = if osc_outer > 1e-15 {
        (osc_inner - suite_c * data_term) / osc_outer
    } else {
        0.0
    };
    Ok(OscillationReport { osc_inner, osc_outer, data_term, mu_hat, radius, suite_c })
}

// ---------------------------------------------------------------------------
// Regularity-exponent fits
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ScaleCoeffs {
    pub scale: f64,
    pub c: f64,
    pub b_plus: [f64; 3],
    pub b_minus: [f64; 3],
    pub a_plus: Option<SymMatrix>,
    pub a_minus: Option<SymMatrix>,
    /// Oscillation of u minus the fitted polynomial over the ball.
    pub residual_osc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityFit {
    pub order: u32,
    /// Fitted exponent: slope of log(residual osc) vs log(scale), minus the
    /// polynomial order.
    pub alpha_hat: f64,
    /// Set when the residuals are at machine level (polynomial data); the
    /// exponent then saturates at the window cap 1.
    pub resolution_limited: bool,
    pub fit_r2: f64,
    pub center: [f64; 3],
    pub scales: Vec<ScaleCoeffs>,
    /// First-order uncertainty proxy for fitted gradients: max of
    /// residual_osc/scale over the two finest scales.
    pub jump_tolerance: f64,
    /// Same proxy for fitted Hessians (residual_osc/scale^2).
    pub coeff_tolerance: f64,
}

impl RegularityFit {
    /// Jump of the fitted one-sided vertical gradients at the finest scale.
    pub fn normal_gradient_jump(&self, n: usize) -> f64 {
        let last = self.scales.last().expect("at least 3 scales");
        last.b_plus[n - 1] - last.b_minus[n - 1]
    }
}

/// Fits one-sided polynomials of degree `order` at dyadic scales around a
/// point on the interface and regresses the residual oscillations.
///
/// Order 0 fits a shared constant; order 1 shares the constant across sides
/// (and for flat interfaces also the tangential gradient); order 2 shares
/// only the constant, fitting one-sided gradients and Hessians.
pub fn fit_regularity_exponent(
    solution: &GridField,
    iface: &InterfaceGraph,
    center: &[f64; 3],
    order: u32,
    scale_window: (f64, f64),
) -> Result<RegularityFit, CoreError> {
    let grid = &solution.grid;
    let n = grid.n;
    if order > 2 {
        return Err(CoreError::InvalidInput("fit order must be 0, 1, or 2".into()));
    }
    if (center[n - 1] - iface.eval(center)).abs() > grid.h {
        return Err(CoreError::InvalidInput("fit center must lie on the interface".into()));
    }
    let (lo, hi) = scale_window;
    if !(lo >= 4.0 * grid.h - 1e-12 && hi > lo) {
        return Err(CoreError::InvalidInput(
            "scale window must satisfy 4h <= lo < hi".into(),
        ));
    }
    let mut radii = Vec::new();
    let mut r = hi;
    while r >= lo - 1e-12 {
        radii.push(r);
        r *= 0.5;
    }
    if radii.len() < 3 {
        return Err(CoreError::DegenerateRegression(format!(
            "only {} usable scales in [{lo}, {hi}]",
            radii.len()
        )));
    }
    let flat = iface.is_flat();
    let mut scales = Vec::new();
    let mut u_scale = 0.0f64;
    for &rk in &radii {
        let nodes = grid.nodes_in_ball(center, rk);
        let (coeffs, resid) = fit_at_scale(solution, iface, center, order, flat, rk, &nodes)?;
        u_scale = u_scale.max(nodes.iter().map(|&i| solution.value(i).abs()).fold(0.0, f64::max));
        scales.push(ScaleCoeffs { scale: rk, residual_osc: resid, ..coeffs });
    }
    let floor = 1e-11 * (1.0 + u_scale);
    let usable: Vec<(f64, f64)> = scales
        .iter()
        .filter(|s| s.residual_osc > floor)
        .map(|s| (s.scale.ln(), s.residual_osc.ln()))
        .collect();
    let resolution_limited = usable.len() < 3;
    let (alpha_hat, fit_r2) = if resolution_limited {
        (1.0, 1.0)
    } else {
        let xs: Vec<f64> = usable.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.1).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        (slope - order as f64, r2)
    };
    // A residual of amplitude M over a half-ball of radius r can tilt the
    // fitted gradient by about 3 M / r (checked by fitting bounded noise on
    // these node sets); Hessian entries scale with 1/r^2.
    let mut jt = 0.0f64;
    let mut ct = 0.0f64;
    for s in scales.iter().rev().take(2) {
        jt = jt.max(3.0 * s.residual_osc / s.scale);
        ct = ct.max(3.0 * s.residual_osc / (s.scale * s.scale));
    }
    Ok(RegularityFit {
        order,
        alpha_hat,
        resolution_limited,
        fit_r2,
        center: *center,
        scales,
        jump_tolerance: jt,
        coeff_tolerance: ct,
    })
}

fn fit_at_scale(
    solution: &GridField,
    iface: &InterfaceGraph,
    center: &[f64; 3],
    order: u32,
    flat: bool,
    r: f64,
    nodes: &[usize],
) -> Result<(ScaleCoeffs, f64), CoreError> {
    let grid = &solution.grid;
    let n = grid.n;
    // basis layout in scaled coordinates y = (x - center)/r
    // order 0: [1]
    // order 1 flat:   [1, y', yn|+, yn|-]
    // order 1 curved: [1, y|+, y|-]
    // order 2:        [1, y|+, y|-, quad|+, quad|-]
    let quad_terms = n * (n + 1) / 2;
    let cols = match order {
        0 => 1,
        1 => {
            if flat {
                1 + (n - 1) + 2
            } else {
                1 + 2 * n
            }
        }
        _ => 1 + 2 * n + 2 * quad_terms,
    };
    if nodes.len() < cols + 2 {
        return Err(CoreError::InsufficientResolution(format!(
            "{} nodes in ball of radius {r:.3e}, need at least {}",
            nodes.len(),
            cols + 2
        )));
    }
    let mut ata = vec![0.0; cols * cols];
    let mut atb = vec![0.0; cols];
    let mut row = vec![0.0; cols];
    let fill_row = |row: &mut [f64], y: &[f64; 3], plus: bool| {
        for v in row.iter_mut() {
            *v = 0.0;
        }
        row[0] = 1.0;
        match order {
            0 => {}
            1 => {
                if flat {
                    for a in 0..n - 1 {
                        row[1 + a] = y[a];
                    }
                    let base = 1 + (n - 1);
                    row[base + if plus { 0 } else { 1 }] = y[n - 1];
                } else {
                    let base = 1 + if plus { 0 } else { n };
                    for a in 0..n {
                        row[base + a] = y[a];
                    }
                }
            }
            _ => {
                let bbase = 1 + if plus { 0 } else { n };
                for a in 0..n {
                    row[bbase + a] = y[a];
                }
                let qbase = 1 + 2 * n + if plus { 0 } else { n * (n + 1) / 2 };
                let mut t = 0;
                for i in 0..n {
                    for j in 0..=i {
                        row[qbase + t] = if i == j { 0.5 * y[i] * y[i] } else { y[i] * y[j] };
                        t += 1;
                    }
                }
            }
        }
    };
    let side_of = |idx: usize| -> bool {
        let x = grid.coords(idx);
        iface.height_above(&x) >= 0.0
    };
    for &idx in nodes {
        let x = grid.coords(idx);
        let mut y = [0.0; 3];
        for a in 0..n {
            y[a] = (x[a] - center[a]) / r;
        }
        fill_row(&mut row, &y, side_of(idx));
        let b = solution.value(idx);
        for i in 0..cols {
            for j in 0..=i {
                ata[i * cols + j] += row[i] * row[j];
            }
            atb[i] += row[i] * b;
        }
    }
    for i in 0..cols {
        for j in (i + 1)..cols {
            ata[i * cols + j] = ata[j * cols + i];
        }
    }
    let beta = solve_normal_equations(cols, &mut ata, &atb);

    // residual oscillation
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &idx in nodes {
        let x = grid.coords(idx);
        let mut y = [0.0; 3];
        for a in 0..n {
            y[a] = (x[a] - center[a]) / r;
        }
        fill_row(&mut row, &y, side_of(idx));
        let fitted: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let resid = solution.value(idx) - fitted;
        lo = lo.min(resid);
        hi = hi.max(resid);
    }

    // unscale coefficients
    let mut out = ScaleCoeffs {
        scale: r,
        c: beta[0],
        b_plus: [0.0; 3],
        b_minus: [0.0; 3],
        a_plus: None,
        a_minus: None,
        residual_osc: hi - lo,
    };
    match order {
        0 => {}
        1 => {
            if flat {
                for a in 0..n - 1 {
                    out.b_plus[a] = beta[1 + a] / r;
                    out.b_minus[a] = beta[1 + a] / r;
                }
                out.b_plus[n - 1] = beta[1 + (n - 1)] / r;
                out.b_minus[n - 1] = beta[1 + (n - 1) + 1] / r;
            } else {
                for a in 0..n {
                    out.b_plus[a] = beta[1 + a] / r;
                    out.b_minus[a] = beta[1 + n + a] / r;
                }
            }
        }
        _ => {
            for a in 0..n {
                out.b_plus[a] = beta[1 + a] / r;
                out.b_minus[a] = beta[1 + n + a] / r;
            }
            let quad_terms = n * (n + 1) / 2;
            let unpack = |offset: usize, beta: &[f64]| -> SymMatrix {
                let mut m = SymMatrix::zero(n);
                let mut t = 0;
                for i in 0..n {
                    for j in 0..=i {
                        m.set_sym(i, j, beta[offset + t] / (r * r));
                        t += 1;
                    }
                }
                m
            };
            out.a_plus = Some(unpack(1 + 2 * n, &beta));
            out.a_minus = Some(unpack(1 + 2 * n + quad_terms, &beta));
        }
    }
    Ok((out, hi - lo))
}

// ---------------------------------------------------------------------------
// Normal-jump measurement
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct NormalJumpReport {
    pub max_err: f64,
    /// Max error over interface nodes with foot point inside B_{3/4}.
    /// Where the interface meets the fixed boundary the data are generally
    /// incompatible with the jump condition and the solution is singular, so
    /// refinement orders are measured on this interior part (the regularity
    /// statements are interior estimates).
    pub max_err_interior: f64,
    /// (node, error) per interface node.
    pub errors: Vec<(usize, f64)>,
}

/// Measures the normal-derivative jump of a solved field against g at every
/// interface node, with third-order four-point one-sided vertical stencils.
/// The measurement route is deliberately higher order than (and independent
/// of) the second-order stencil the solver enforces, so the reported error
/// tracks the discretization error of the field rather than returning the
/// solver residual.
pub fn measure_normal_jump(
    problem: &TransmissionProblem,
    solution: &GridField,
) -> Result<NormalJumpReport, CoreError> {
    let grid = &solution.grid;
    let mut errors = Vec::with_capacity(grid.interface_nodes().len());
    let mut max_err = 0.0f64;
    let mut max_err_interior = 0.0f64;
    for d in grid.interface_nodes() {
        let node = d.node;
        let dp = d.d_plus_hi.apply(solution, true);
        let dm = d.d_minus_hi.apply(solution, false);
        let err = (dp - dm) / d.nu_n - problem.g.eval(&d.gamma);
        max_err = max_err.max(err.abs());
        let r: f64 = (0..grid.n).map(|a| d.gamma[a] * d.gamma[a]).sum::<f64>().sqrt();
        if r <= 0.75 {
            max_err_interior = max_err_interior.max(err.abs());
        }
        errors.push((node, err));
    }
    Ok(NormalJumpReport { max_err, max_err_interior, errors })
}

// ---------------------------------------------------------------------------
// Viscosity-inequality audit
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AuditSide {
    Sub,
    Super,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViscosityViolation {
    pub node: usize,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViscosityAudit {
    pub side: AuditSide,
    pub violations: Vec<ViscosityViolation>,
}

impl ViscosityAudit {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Discrete audit of the one-sided solution inequalities.  Interior nodes
/// must satisfy F_h(u) >= f - tol (sub) or <= f + tol (super); at interface
/// nodes the conditions combine as in the equivalent viscosity definition:
/// the interior inequality on either side may replace the jump inequality.
pub fn check_viscosity_inequalities(
    candidate: &GridField,
    problem: &TransmissionProblem,
    scheme: &StencilScheme,
    tol: f64,
    side: AuditSide,
) -> Result<ViscosityAudit, CoreError> {
    let grid = &candidate.grid;
    let ghosts = JumpGhosts::for_problem(problem, grid);
    let mut violations = Vec::new();
    let sub = side == AuditSide::Sub;
    let ok_ineq = |lhs: f64, rhs: f64| if sub { lhs >= rhs - tol } else { lhs <= rhs + tol };
    let gap = |lhs: f64, rhs: f64| if sub { rhs - lhs } else { lhs - rhs };
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        match grid.class(idx) {
            NodeClass::InteriorPlus => {
                let v = discretize_interior_ghosted(
                    &problem.op_plus, scheme, grid, candidate, idx, candidate.value(idx), Some(&ghosts),
                )?;
                let f = problem.f_plus.eval(&x);
                if !ok_ineq(v, f) {
                    violations.push(ViscosityViolation { node: idx, gap: gap(v, f) });
                }
            }
            NodeClass::InteriorMinus => {
                let v = discretize_interior_ghosted(
                    &problem.op_minus, scheme, grid, candidate, idx, candidate.value(idx), Some(&ghosts),
                )?;
                let f = problem.f_minus.eval(&x);
                if !ok_ineq(v, f) {
                    violations.push(ViscosityViolation { node: idx, gap: gap(v, f) });
                }
            }
            NodeClass::Interface => {
                let data = grid.interface_data(idx).expect("interface node");
                let (dp, dm) = one_sided_vertical(grid, candidate, idx)?;
                let jump = (dp - dm) / data.nu_n;
                let gval = problem.g.eval(&data.gamma);
                let jump_ok = ok_ineq(jump, gval);
                let op_plus_ok = discretize_interior(&problem.op_plus, scheme, grid, candidate, idx)
                    .map(|v| ok_ineq(v, problem.f_plus.eval(&x)))
                    .unwrap_or(false);
                let op_minus_ok =
                    discretize_interior(&problem.op_minus, scheme, grid, candidate, idx)
                        .map(|v| ok_ineq(v, problem.f_minus.eval(&x)))
                        .unwrap_or(false);
                if !(jump_ok || op_plus_ok || op_minus_ok) {
                    violations.push(ViscosityViolation { node: idx, gap: gap(jump, gval) });
                }
            }
            NodeClass::Boundary => {}
        }
    }
    Ok(ViscosityAudit { side, violations })
}

// ---------------------------------------------------------------------------
// Radial barrier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct RadialBarrierReport {
    pub ok: bool,
    /// lambda (gamma + 1) - Lambda (n - 1).
    pub margin: f64,
    /// Minimum of the discrete M^- over the annulus nodes.
    pub discrete_min: f64,
    /// Consistency band used for the sign comparison.
    pub tol_band: f64,
    pub sign_agrees: bool,
}

/// phi(r) = r^-gamma - (2/3)^-gamma, the radial barrier profile.
pub fn radial_barrier_profile(r: f64, gamma: f64) -> f64 {
    r.powf(-gamma) - (2.0f64 / 3.0).powf(-gamma)
}

/// Validates the radial barrier condition: the profile is a subsolution of
/// the minimal Pucci operator on an annulus iff
/// margin = lambda (gamma+1) - Lambda (n-1) > 0.  The analytic margin is
/// compared against the sign of the discrete minimal-Pucci minimum over an
/// annulus grid.
pub fn validate_radial_barrier(
    gamma: f64,
    lambda: f64,
    lambda_cap: f64,
    n: usize,
    cells: usize,
) -> Result<RadialBarrierReport, CoreError> {
    if !(gamma > 0.0 && lambda > 0.0 && lambda_cap >= lambda) {
        return Err(CoreError::InvalidInput("barrier parameters must be positive".into()));
    }
    let margin = lambda * (gamma + 1.0) - lambda_cap * (n as f64 - 1.0);
    let domain = crate::geometry::DomainSpec::square(n);
    let grid = Grid::build(domain, InterfaceGraph::flat(n), cells)?;
    let scheme = StencilScheme::new(n, 2)?;
    let field = GridField::from_fn(&grid, |x| {
        let r: f64 = (0..n).map(|a| x[a] * x[a]).sum::<f64>().sqrt();
        radial_barrier_profile(r.max(1e-6), gamma)
    });
    let op = EllipticOperator::pucci_minus(lambda, lambda_cap);
    let (r_lo, r_hi) = (0.25, 0.65);
    let mut discrete_min = f64::INFINITY;
    for idx in grid.node_indices() {
        if grid.class(idx) == NodeClass::Boundary {
            continue;
        }
        let x = grid.coords(idx);
        let r: f64 = (0..n).map(|a| x[a] * x[a]).sum::<f64>().sqrt();
        if r < r_lo || r > r_hi {
            continue;
        }
        let v = discretize_interior(&op, &scheme, &grid, &field, idx)?;
        discrete_min = discrete_min.min(v);
    }
    // Consistency error of the centered differences scales with
    // h^2 * |phi''''|; the frame-angle gap only biases the discrete minimum
    // upward, so it enters the band solely for the margin = 0 case.
    let phi4 = gamma * (gamma + 1.0) * (gamma + 2.0) * (gamma + 3.0) * r_lo.powf(-gamma - 4.0);
    let band_h2 = 2.0 * lambda_cap * grid.h * grid.h * phi4;
    let mag = gamma * (gamma + 1.0) * r_lo.powf(-gamma - 2.0);
    let band_frame = 0.2 * (lambda_cap - lambda) * mag + band_h2;
    let (sign_agrees, tol_band) = if margin > 1e-12 {
        (discrete_min > -band_h2, band_h2)
    } else if margin < -1e-12 {
        (discrete_min < 0.0, 0.0)
    } else {
        (discrete_min.abs() <= band_frame, band_frame)
    };
    Ok(RadialBarrierReport { ok: margin > 0.0, margin, discrete_min, tol_band, sign_agrees })
}

// ---------------------------------------------------------------------------
// Interface barrier
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct InterfaceBarrierReport {
    pub w: GridField,
    /// Worst-case one-sided normal derivatives over the flat part of the
    /// interface: min of the plus side (positive for a valid barrier) and
    /// max of the minus side (negative).
    pub c_plus_hat: f64,
    pub c_minus_hat: f64,
}

/// Solves the one-operator barrier problem M^-(D^2 w) = 0 on each side of
/// the interface with ramp boundary data (0 near the interface center, 1 on
/// the outer boundary) and measures the one-sided normal derivatives on the
/// zero region: Hopf behavior demands a strictly positive plus-side
/// derivative and a strictly negative minus-side derivative.
pub fn validate_interface_barrier(
    grid: &Arc<Grid>,
    lambda: f64,
    lambda_cap: f64,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<InterfaceBarrierReport, CoreError> {
    let n = grid.n;
    let op = EllipticOperator::pucci_minus(lambda, lambda_cap);
    let ramp = |x: &[f64; 3]| -> f64 {
        let r: f64 = (0..n).map(|a| x[a] * x[a]).sum::<f64>().sqrt();
        ((r - 0.5) / 0.25).clamp(0.0, 1.0)
    };
    let solve_side = |plus: bool| -> Result<GridField, CoreError> {
        let mut fixed = vec![None; grid.num_nodes()];
        let mut active = vec![false; grid.num_nodes()];
        for idx in grid.node_indices() {
            match grid.class(idx) {
                NodeClass::InteriorPlus => {
                    active[idx] = plus;
                }
                NodeClass::InteriorMinus => {
                    active[idx] = !plus;
                }
                NodeClass::Interface => {
                    active[idx] = true;
                    fixed[idx] = Some(ramp(&grid.coords(idx)));
                }
                NodeClass::Boundary => {
                    active[idx] = true;
                    fixed[idx] = Some(1.0);
                }
            }
        }
        solve_masked(&op, 0.0, &fixed, &active, grid, scheme, params)
    };
    let w_plus = solve_side(true)?;
    let w_minus = solve_side(false)?;
    let mut w = GridField::zeros(grid);
    for idx in grid.node_indices() {
        let v = match grid.class(idx) {
            NodeClass::InteriorPlus => w_plus.value(idx),
            NodeClass::InteriorMinus => w_minus.value(idx),
            NodeClass::Interface => ramp(&grid.coords(idx)),
            NodeClass::Boundary => 1.0,
        };
        w.set(idx, v);
    }
    let mut c_plus = f64::INFINITY;
    let mut c_minus = f64::NEG_INFINITY;
    for d in grid.interface_nodes() {
        let r: f64 = (0..n).map(|a| d.gamma[a] * d.gamma[a]).sum::<f64>().sqrt();
        if r > 0.45 {
            continue;
        }
        let (dp, dm) = one_sided_vertical(grid, &w, d.node)?;
        c_plus = c_plus.min(dp * d.nu_n);
        c_minus = c_minus.max(dm * d.nu_n);
    }
    Ok(InterfaceBarrierReport { w, c_plus_hat: c_plus, c_minus_hat: c_minus })
}

// ---------------------------------------------------------------------------
// C^{2,alpha} matrix relations
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct C2RelationsReport {
    /// max |A^+_ij - A^-_ij| over tangential entries i, j < n.
    pub tangential_gap: f64,
    /// max_j |(A^+ - A^-)_{jn} - g_{x_j}(0)|.
    pub mixed_gap: f64,
    /// |(B^+ - B^-)_n - g(0)|.
    pub normal_jump_gap: f64,
    pub op_residual_plus: f64,
    pub op_residual_minus: f64,
    pub tolerance: f64,
}

impl C2RelationsReport {
    pub fn ok(&self) -> bool {
        self.tangential_gap <= self.tolerance
            && self.mixed_gap <= self.tolerance
            && self.normal_jump_gap <= self.tolerance
            && self.op_residual_plus <= self.tolerance
            && self.op_residual_minus <= self.tolerance
    }
}

/// Checks the structure relations carried by a second-order fit at a flat
/// interface point: tangential Hessian blocks agree across the interface,
/// mixed entries differ by the tangential gradient of g, vertical gradients
/// differ by g(0), and both fitted Hessians are operator nulls.
pub fn check_c2_matrix_relations(
    fit: &RegularityFit,
    g: &ScalarField,
    op: &EllipticOperator,
    n: usize,
    tolerance: f64,
) -> Result<C2RelationsReport, CoreError> {
    if fit.order != 2 {
        return Err(CoreError::InvalidInput("relations need an order-2 fit".into()));
    }
    if !op.is_concave() {
        return Err(CoreError::InvalidInput("relations are stated for concave operators".into()));
    }
    let last = fit.scales.last().ok_or_else(|| {
        CoreError::DegenerateRegression("fit carries no scales".into())
    })?;
    let (a_plus, a_minus) = match (&last.a_plus, &last.a_minus) {
        (Some(p), Some(m)) => (p, m),
        _ => return Err(CoreError::InvalidInput("order-2 fit lacks Hessians".into())),
    };
    let g0 = g.eval(&fit.center);
    // tangential gradient of g at the center by central differences
    let delta = 1e-5;
    let mut grad_g = [0.0; 2];
    for a in 0..n - 1 {
        let mut xp = fit.center;
        let mut xm = fit.center;
        xp[a] += delta;
        xm[a] -= delta;
        grad_g[a] = (g.eval(&xp) - g.eval(&xm)) / (2.0 * delta);
    }
    let mut tangential_gap = 0.0f64;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            tangential_gap = tangential_gap.max((a_plus.get(i, j) - a_minus.get(i, j)).abs());
        }
    }
    let mut mixed_gap = 0.0f64;
    for j in 0..n - 1 {
        let d = a_plus.get(j, n - 1) - a_minus.get(j, n - 1);
        mixed_gap = mixed_gap.max((d - grad_g[j]).abs());
    }
    let normal_jump_gap = ((last.b_plus[n - 1] - last.b_minus[n - 1]) - g0).abs();
    Ok(C2RelationsReport {
        tangential_gap,
        mixed_gap,
        normal_jump_gap,
        op_residual_plus: op.eval(a_plus).abs(),
        op_residual_minus: op.eval(a_minus).abs(),
        tolerance,
    })
}
