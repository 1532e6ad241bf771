//! Discrete solution of the transmission problem by monotone relaxation
//! sweeps: each node solves its scalar equation for the center value
//! (bracketed root-finding; the nodal residual is strictly decreasing in the
//! center), swept in lexicographic or red-black order with damping.
//!
//! For flat interfaces the iteration is seeded at the explicit subsolution
//! built from the Dirichlet barrier pair, so undamped sweeps realize the
//! Perron supremum discretely: iterates increase pointwise and stay below the
//! supersolution.

use crate::error::CoreError;
use crate::grid::{Grid, GridField, NodeClass, StencilScheme, TransmissionProblem};
use crate::operators::{EllipticOperator, OperatorKind};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOrder {
    Lexicographic,
    RedBlack,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveParams {
    /// Base residual tolerance; the effective target is
    /// `tolerance * (1 + ||data||_inf)`.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub sweep_order: SweepOrder,
    /// Damping factor in (0, 1]; halved automatically when the residual
    /// increases between sweeps.
    pub damping: f64,
    /// Seed flat solves from the Perron subsolution and record the bracket
    /// pair (costs two auxiliary Dirichlet solves).
    #[serde(default = "default_bracket_seed")]
    pub bracket_seed: bool,
}

fn default_bracket_seed() -> bool {
    true
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 200_000,
            sweep_order: SweepOrder::Lexicographic,
            damping: 1.0,
            bracket_seed: true,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.tolerance > 0.0) {
            return Err(CoreError::InvalidInput("tolerance must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(CoreError::InvalidInput("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub field: GridField,
    /// Max-norm of the assembled residual after each sweep.
    pub residual_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub effective_tolerance: f64,
    /// Whether the iterates were pointwise nondecreasing across sweeps
    /// (discrete Perron monotonicity when seeded at the subsolution).
    pub monotone_iterates: bool,
    /// Set when the residual history was not eventually nonincreasing.
    pub residual_nonmonotone: bool,
    pub final_damping: f64,
    /// Sub/supersolution bracket (flat interfaces only).
    pub bracket: Option<(GridField, GridField)>,
}

// ---------------------------------------------------------------------------
// Nodal equation machinery
// ---------------------------------------------------------------------------

/// One stencil direction resolved to flat indices; `w` = 1/(h|e|)^2 and
/// `offset` carries the ghost corrections of the two legs.
#[derive(Clone, Debug)]
struct DirTerm {
    plus: u32,
    minus: u32,
    w: f64,
    offset: f64,
}

#[derive(Clone, Debug)]
struct FrameData {
    dirs: Vec<DirTerm>,
}

/// Linear form value(c) = sum_d coeff_d * w_d * (u_plus + u_minus - 2c).
#[derive(Clone, Debug)]
struct LinearForm {
    terms: Vec<(DirTerm, f64)>,
    slope: f64,
}

#[derive(Clone, Debug)]
enum OpSolver {
    Pucci { minus: bool, lambda: f64, cap: f64, frames: Vec<FrameData> },
    MinLinear { members: Vec<LinearForm> },
    Blend { weight: f64, plus: Box<OpSolver>, minus: Box<OpSolver> },
}

impl OpSolver {
    /// Value and d(value)/d(center) of the discrete operator as a function of
    /// the center unknown.
    fn eval(&self, vals: &[f64], c: f64) -> (f64, f64) {
        match self {
            OpSolver::Pucci { minus, lambda, cap, frames } => {
                let mut best = if *minus { f64::INFINITY } else { f64::NEG_INFINITY };
                let mut best_slope = 0.0;
                for fr in frames {
                    let mut v = 0.0;
                    let mut sl = 0.0;
                    for d in &fr.dirs {
                        let t = (vals[d.plus as usize] + vals[d.minus as usize] + d.offset - 2.0 * c) * d.w;
                        let coeff = if *minus {
                            if t >= 0.0 { *lambda } else { *cap }
                        } else if t >= 0.0 {
                            *cap
                        } else {
                            *lambda
                        };
                        v += coeff * t;
                        sl -= 2.0 * d.w * coeff;
                    }
                    let better = if *minus { v < best } else { v > best };
                    if better {
                        best = v;
                        best_slope = sl;
                    }
                }
                (best, best_slope)
            }
            OpSolver::MinLinear { members } => {
                let mut best = f64::INFINITY;
                let mut best_slope = 0.0;
                for m in members {
                    let mut v = 0.0;
                    for (d, cw) in &m.terms {
                        v += cw * (vals[d.plus as usize] + vals[d.minus as usize] + d.offset - 2.0 * c);
                    }
                    if v < best {
                        best = v;
                        best_slope = -m.slope;
                    }
                }
                (best, best_slope)
            }
            OpSolver::Blend { weight, plus, minus } => {
                let (vp, sp) = plus.eval(vals, c);
                let (vm, sm) = minus.eval(vals, c);
                (weight * vp + (1.0 - weight) * vm, weight * sp + (1.0 - weight) * sm)
            }
        }
    }

    /// Positive lower bound on |d(value)/dc|, for bracketing.
    fn slope_floor(&self) -> f64 {
        match self {
            OpSolver::Pucci { lambda, frames, .. } => frames
                .iter()
                .map(|f| 2.0 * lambda * f.dirs.iter().map(|d| d.w).sum::<f64>())
                .fold(f64::INFINITY, f64::min),
            OpSolver::MinLinear { members } => {
                members.iter().map(|m| m.slope).fold(f64::INFINITY, f64::min)
            }
            OpSolver::Blend { plus, minus, .. } => plus.slope_floor().min(minus.slope_floor()),
        }
    }
}

#[derive(Clone, Debug)]
enum NodeEq {
    Fixed(f64),
    /// F_h(u) = rhs, solved for the center value.
    Interior { op: OpSolver, rhs: f64, slope_floor: f64 },
    /// Transmission equation at the foot point: the combined one-sided
    /// stencil (D^+ - D^-) applied to u equals target = g * nu_n.  The
    /// residual is reported in normal units (divided by nu_n).
    Jump {
        /// (node, coefficient) terms of D^+ - D^-, the center excluded.
        terms: Vec<(u32, f64)>,
        /// Combined coefficient of the center value (negative).
        center_coeff: f64,
        target: f64,
        nu_n: f64,
    },
}

impl NodeEq {
    fn residual(&self, vals: &[f64], c: f64) -> f64 {
        match self {
            NodeEq::Fixed(v) => c - v,
            NodeEq::Interior { op, rhs, .. } => op.eval(vals, c).0 - rhs,
            NodeEq::Jump { terms, center_coeff, target, nu_n } => {
                let mut num = center_coeff * c;
                for &(node, coeff) in terms {
                    num += coeff * vals[node as usize];
                }
                (num - target) / nu_n
            }
        }
    }

    /// Residual and its center-derivative at the current center value.
    fn residual_slope(&self, vals: &[f64], c: f64) -> (f64, f64) {
        match self {
            NodeEq::Fixed(v) => (c - v, 1.0),
            NodeEq::Interior { op, rhs, .. } => {
                let (v, s) = op.eval(vals, c);
                (v - rhs, s)
            }
            NodeEq::Jump { terms, center_coeff, target, nu_n } => {
                let mut num = center_coeff * c;
                for &(node, coeff) in terms {
                    num += coeff * vals[node as usize];
                }
                ((num - target) / nu_n, center_coeff / nu_n)
            }
        }
    }

    /// Solves the nodal equation for the center value, other values frozen;
    /// `(r0, s0)` is the residual/slope pair already evaluated at `c0`.
    fn solve_center(&self, vals: &[f64], c0: f64, r0: f64, s0: f64, tol: f64) -> f64 {
        match self {
            NodeEq::Fixed(v) => *v,
            NodeEq::Jump { terms, center_coeff, target, .. } => {
                let mut acc = 0.0;
                for &(node, coeff) in terms {
                    acc += coeff * vals[node as usize];
                }
                (target - acc) / center_coeff
            }
            NodeEq::Interior { op, rhs, slope_floor } => {
                let f = |c: f64| {
                    let (v, s) = op.eval(vals, c);
                    (v - rhs, s)
                };
                if r0.abs() <= tol {
                    return c0;
                }
                // The residual is strictly decreasing in c, so the root sits
                // within |r0|/slope_floor of the current center.
                let (mut lo, mut hi) = if r0 > 0.0 {
                    (c0, c0 + r0 / slope_floor)
                } else {
                    (c0 + r0 / slope_floor, c0)
                };
                let mut c = c0;
                let mut r = r0;
                let mut s = s0;
                for _ in 0..80 {
                    let mut next = c - r / s;
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    let (rn, sn) = f(next);
                    if rn.abs() <= tol || (hi - lo) <= 1e-16 * (1.0 + next.abs()) {
                        return next;
                    }
                    if rn > 0.0 {
                        lo = next;
                    } else {
                        hi = next;
                    }
                    c = next;
                    r = rn;
                    s = sn;
                }
                0.5 * (lo + hi)
            }
        }
    }
}

fn build_op_solver(
    op: &EllipticOperator,
    grid: &Grid,
    scheme: &StencilScheme,
    node: usize,
    usable: &dyn Fn(usize, &crate::grid::Frame) -> bool,
    ghosts: &crate::grid::JumpGhosts,
) -> Result<OpSolver, CoreError> {
    let side = match grid.class(node) {
        NodeClass::InteriorPlus => 1i8,
        NodeClass::InteriorMinus => -1i8,
        _ => 0,
    };
    let resolve_frame = |frame: &crate::grid::Frame| -> FrameData {
        FrameData {
            dirs: frame
                .dirs
                .iter()
                .map(|dir| {
                    let plus = grid.offset(node, dir).expect("usability pre-checked");
                    let minus = grid
                        .offset(node, &[-dir[0], -dir[1], -dir[2]])
                        .expect("usability pre-checked");
                    let len_sq: f64 = dir.iter().map(|&d| (d as f64) * (d as f64)).sum();
                    let offset = if side == 0 {
                        0.0
                    } else {
                        ghosts.offset(grid, plus, side) + ghosts.offset(grid, minus, side)
                    };
                    DirTerm { plus: plus as u32, minus: minus as u32, w: 1.0 / (grid.h * grid.h * len_sq), offset }
                })
                .collect(),
        }
    };
    match &op.kind {
        OperatorKind::PucciMinus | OperatorKind::PucciPlus => {
            let frames: Vec<FrameData> = scheme
                .frames
                .iter()
                .filter(|f| usable(node, f))
                .map(resolve_frame)
                .collect();
            if frames.is_empty() {
                return Err(CoreError::SchemeInapplicable(format!("no usable frame at node {node}")));
            }
            Ok(OpSolver::Pucci {
                minus: matches!(op.kind, OperatorKind::PucciMinus),
                lambda: op.lambda,
                cap: op.lambda_cap,
                frames,
            })
        }
        OperatorKind::Linear(a) => {
            let member = build_linear_form(a, grid, node, usable, ghosts)?;
            Ok(OpSolver::MinLinear { members: vec![member] })
        }
        OperatorKind::BellmanMin(matrices) => {
            let members = matrices
                .iter()
                .map(|a| build_linear_form(a, grid, node, usable, ghosts))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(OpSolver::MinLinear { members })
        }
        OperatorKind::Blend { plus, minus, weight } => {
            let x = grid.coords(node);
            Ok(OpSolver::Blend {
                weight: weight.weight(&x),
                plus: Box::new(build_op_solver(plus, grid, scheme, node, usable, ghosts)?),
                minus: Box::new(build_op_solver(minus, grid, scheme, node, usable, ghosts)?),
            })
        }
    }
}

fn build_linear_form(
    a: &crate::matrix::SymMatrix,
    grid: &Grid,
    node: usize,
    usable: &dyn Fn(usize, &crate::grid::Frame) -> bool,
    ghosts: &crate::grid::JumpGhosts,
) -> Result<LinearForm, CoreError> {
    let side = match grid.class(node) {
        NodeClass::InteriorPlus => 1i8,
        NodeClass::InteriorMinus => -1i8,
        _ => 0,
    };
    let parts = crate::grid::linear_splitting(a, grid.n)?;
    let mut terms = Vec::new();
    let mut slope = 0.0;
    for (dir, coeff) in parts {
        if coeff == 0.0 {
            continue;
        }
        let single = crate::grid::Frame { dirs: vec![dir] };
        if !usable(node, &single) {
            return Err(CoreError::SchemeInapplicable(format!(
                "splitting direction unavailable at node {node}"
            )));
        }
        let plus = grid.offset(node, &dir).expect("checked");
        let minus = grid.offset(node, &[-dir[0], -dir[1], -dir[2]]).expect("checked");
        let len_sq: f64 = dir.iter().map(|&d| (d as f64) * (d as f64)).sum();
        let w = 1.0 / (grid.h * grid.h * len_sq);
        let offset = if side == 0 {
            0.0
        } else {
            ghosts.offset(grid, plus, side) + ghosts.offset(grid, minus, side)
        };
        terms.push((DirTerm { plus: plus as u32, minus: minus as u32, w, offset }, coeff * w));
        slope += 2.0 * coeff * w;
    }
    Ok(LinearForm { terms, slope })
}

// ---------------------------------------------------------------------------
// Sweep engine
// ---------------------------------------------------------------------------

struct SweepSystem {
    eqs: Vec<NodeEq>,
    /// Unknowns in lexicographic order (Fixed nodes are applied once).
    unknowns: Vec<u32>,
    red: Vec<u32>,
    black: Vec<u32>,
}

impl SweepSystem {
    fn new(grid: &Grid, eqs: Vec<NodeEq>) -> Self {
        let mut unknowns = Vec::new();
        let mut red = Vec::new();
        let mut black = Vec::new();
        let dims = grid.dims();
        for (idx, eq) in eqs.iter().enumerate() {
            if matches!(eq, NodeEq::Fixed(_)) {
                continue;
            }
            unknowns.push(idx as u32);
            let i = idx % dims[0];
            let j = (idx / dims[0]) % dims[1];
            let k = idx / (dims[0] * dims[1]);
            if (i + j + k) % 2 == 0 {
                red.push(idx as u32);
            } else {
                black.push(idx as u32);
            }
        }
        Self { eqs, unknowns, red, black }
    }

    fn apply_fixed(&self, vals: &mut [f64]) {
        for (idx, eq) in self.eqs.iter().enumerate() {
            if let NodeEq::Fixed(v) = eq {
                vals[idx] = *v;
            }
        }
    }

    fn max_residual(&self, vals: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for &idx in &self.unknowns {
            let idx = idx as usize;
            m = m.max(self.eqs[idx].residual(vals, vals[idx]).abs());
        }
        m
    }

    /// One sweep; returns the max nodal residual seen before each update
    /// (the dynamic residual of the evolving field).
    fn sweep(&self, vals: &mut Vec<f64>, order: SweepOrder, damping: f64, node_tol: f64, scratch: &mut Vec<f64>) -> f64 {
        let mut dyn_res = 0.0f64;
        match order {
            SweepOrder::Lexicographic => {
                for &idx in &self.unknowns {
                    let idx = idx as usize;
                    let c0 = vals[idx];
                    let (r0, s0) = self.eqs[idx].residual_slope(vals, c0);
                    dyn_res = dyn_res.max(r0.abs());
                    let sol = self.eqs[idx].solve_center(vals, c0, r0, s0, node_tol);
                    vals[idx] = c0 + damping * (sol - c0);
                }
            }
            SweepOrder::RedBlack => {
                // Each color pass reads the snapshot taken at its start, so
                // the updates within a color are order-independent and may be
                // done concurrently.
                for color in [&self.red, &self.black] {
                    scratch.clone_from(vals);
                    for &idx in color.iter() {
                        let idx = idx as usize;
                        let c0 = scratch[idx];
                        let (r0, s0) = self.eqs[idx].residual_slope(scratch, c0);
                        dyn_res = dyn_res.max(r0.abs());
                        let sol = self.eqs[idx].solve_center(scratch, c0, r0, s0, node_tol);
                        vals[idx] = c0 + damping * (sol - c0);
                    }
                }
            }
        }
        dyn_res
    }
}

struct SweepOutcome {
    vals: Vec<f64>,
    history: Vec<f64>,
    converged: bool,
    monotone: bool,
    nonmonotone_residual: bool,
    final_damping: f64,
}

fn run_sweeps(
    system: &SweepSystem,
    init: Vec<f64>,
    params: &SolveParams,
    eff_tol: f64,
    mono_tol: f64,
) -> SweepOutcome {
    let mut vals = init;
    system.apply_fixed(&mut vals);
    let node_tol = eff_tol * 0.05;
    let mut damping = params.damping;
    let mut history = Vec::new();
    let mut monotone = true;
    let mut nonmono = false;
    let mut scratch = Vec::new();
    let mut prev = vals.clone();
    let mut converged = system.max_residual(&vals) <= eff_tol;
    let mut sweeps = 0;
    let mut calm_streak = 0usize;
    while !converged && sweeps < params.max_sweeps {
        let dyn_res = system.sweep(&mut vals, params.sweep_order, damping, node_tol, &mut scratch);
        sweeps += 1;
        if monotone {
            monotone = vals.iter().zip(prev.iter()).all(|(a, b)| *a >= *b - mono_tol);
        }
        prev.clone_from(&vals);
        if let Some(&last) = history.last() {
            // Only a substantial increase counts as divergence; small
            // fluctuations from frame switching are normal.  Damping creeps
            // back up after a calm stretch.
            if dyn_res > last * 1.2 {
                nonmono = true;
                calm_streak = 0;
                if damping > 0.125 {
                    damping *= 0.5;
                }
            } else if dyn_res <= last {
                calm_streak += 1;
                if calm_streak >= 30 && damping < params.damping {
                    damping = (2.0 * damping).min(params.damping);
                    calm_streak = 0;
                }
            }
        }
        history.push(dyn_res);
        // history carries the cheap dynamic residual; convergence is
        // confirmed on the assembled residual of the settled field
        if dyn_res <= eff_tol {
            converged = system.max_residual(&vals) <= eff_tol;
        }
    }
    SweepOutcome { vals, history, converged, monotone, nonmonotone_residual: nonmono, final_damping: damping }
}

// ---------------------------------------------------------------------------
// Public solvers
// ---------------------------------------------------------------------------

fn build_transmission_system(
    problem: &TransmissionProblem,
    grid: &Grid,
    scheme: &StencilScheme,
) -> Result<SweepSystem, CoreError> {
    let ghosts = crate::grid::JumpGhosts::for_problem(problem, grid);
    let mut eqs = Vec::with_capacity(grid.num_nodes());
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        let eq = match grid.class(idx) {
            NodeClass::Boundary => NodeEq::Fixed(problem.boundary.eval(&x)),
            NodeClass::InteriorPlus | NodeClass::InteriorMinus => {
                let (op, rhs) = if grid.class(idx) == NodeClass::InteriorPlus {
                    (&problem.op_plus, problem.f_plus.eval(&x))
                } else {
                    (&problem.op_minus, problem.f_minus.eval(&x))
                };
                let usable = |node: usize, frame: &crate::grid::Frame| grid.frame_usable(node, frame);
                let solver = build_op_solver(op, grid, scheme, idx, &usable, &ghosts)?;
                let floor = solver.slope_floor();
                NodeEq::Interior { op: solver, rhs, slope_floor: floor }
            }
            NodeClass::Interface => {
                let data = grid.interface_data(idx).expect("interface node");
                let mut terms: Vec<(u32, f64)> = Vec::with_capacity(6);
                let mut center_coeff = 0.0;
                for (stencil, sign) in [(&data.d_plus, 1.0), (&data.d_minus, -1.0)] {
                    for &(node, coeff) in &stencil.terms {
                        if node == idx {
                            center_coeff += sign * coeff;
                        } else {
                            terms.push((node as u32, sign * coeff));
                        }
                    }
                }
                NodeEq::Jump {
                    terms,
                    center_coeff,
                    target: problem.g.eval(&data.gamma) * data.nu_n,
                    nu_n: data.nu_n,
                }
            }
        };
        eqs.push(eq);
    }
    Ok(SweepSystem::new(grid, eqs))
}

/// Solves a Dirichlet problem for a single operator on the whole domain
/// (every non-boundary node carries the operator equation).  Used by the
/// barrier constructions.
pub fn solve_dirichlet(
    op: &EllipticOperator,
    rhs: f64,
    boundary: &dyn Fn(&[f64; 3]) -> f64,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<GridField, CoreError> {
    params.validate()?;
    let in_array = |node: usize, frame: &crate::grid::Frame| -> bool {
        frame.dirs.iter().all(|dir| {
            grid.offset(node, dir).is_some()
                && grid.offset(node, &[-dir[0], -dir[1], -dir[2]]).is_some()
        })
    };
    let no_ghosts = crate::grid::JumpGhosts::none_for(grid);
    let mut eqs = Vec::with_capacity(grid.num_nodes());
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        let eq = if grid.class(idx) == NodeClass::Boundary {
            NodeEq::Fixed(boundary(&x))
        } else {
            let solver = build_op_solver(op, grid, scheme, idx, &in_array, &no_ghosts)?;
            let floor = solver.slope_floor();
            NodeEq::Interior { op: solver, rhs, slope_floor: floor }
        };
        eqs.push(eq);
    }
    let system = SweepSystem::new(grid, eqs);
    let bound = grid
        .node_indices()
        .map(|i| boundary(&grid.coords(i)).abs())
        .fold(0.0f64, f64::max);
    let eff_tol = params.tolerance * (1.0 + rhs.abs().max(bound));
    let outcome = run_sweeps(&system, vec![0.0; grid.num_nodes()], params, eff_tol, 1e-12);
    if !outcome.converged {
        return Err(CoreError::NonConvergence {
            residual: outcome.history.last().copied().unwrap_or(f64::NAN),
            sweeps: outcome.history.len(),
        });
    }
    GridField::from_values(grid, outcome.vals)
}

/// Solves a one-operator Dirichlet problem on a masked node set: nodes with
/// `fixed[i] = Some(v)` are pinned, nodes outside `active` are excluded (any
/// frame touching them is dropped).  Used by the interface barrier check,
/// which solves each side of the interface separately.
pub fn solve_masked(
    op: &EllipticOperator,
    rhs: f64,
    fixed: &[Option<f64>],
    active: &[bool],
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<GridField, CoreError> {
    params.validate()?;
    if fixed.len() != grid.num_nodes() || active.len() != grid.num_nodes() {
        return Err(CoreError::InvalidInput("mask length mismatch".into()));
    }
    let usable = |node: usize, frame: &crate::grid::Frame| -> bool {
        frame.dirs.iter().all(|dir| {
            let a = grid.offset(node, dir);
            let b = grid.offset(node, &[-dir[0], -dir[1], -dir[2]]);
            match (a, b) {
                (Some(a), Some(b)) => active[a] && active[b],
                _ => false,
            }
        })
    };
    let no_ghosts = crate::grid::JumpGhosts::none_for(grid);
    let mut eqs = Vec::with_capacity(grid.num_nodes());
    let mut data_max = rhs.abs();
    for idx in grid.node_indices() {
        let eq = if let Some(v) = fixed[idx] {
            data_max = data_max.max(v.abs());
            NodeEq::Fixed(v)
        } else if !active[idx] {
            NodeEq::Fixed(0.0)
        } else {
            let solver = build_op_solver(op, grid, scheme, idx, &usable, &no_ghosts)?;
            let floor = solver.slope_floor();
            NodeEq::Interior { op: solver, rhs, slope_floor: floor }
        };
        eqs.push(eq);
    }
    let system = SweepSystem::new(grid, eqs);
    let eff_tol = params.tolerance * (1.0 + data_max);
    let outcome = run_sweeps(&system, vec![0.0; grid.num_nodes()], params, eff_tol, 1e-12);
    if !outcome.converged {
        return Err(CoreError::NonConvergence {
            residual: outcome.history.last().copied().unwrap_or(f64::NAN),
            sweeps: outcome.history.len(),
        });
    }
    GridField::from_values(grid, outcome.vals)
}

/// Builds the explicit sub/supersolution pair for a flat-interface problem:
/// the minimal-Pucci Dirichlet solution with boundary data lowered by
/// (1/2)||g|| |x_n| plus the matching kink gives a subsolution, and dually
/// for the supersolution.
pub fn perron_barriers(
    problem: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<(GridField, GridField), CoreError> {
    if !problem.iface.is_flat() {
        return Err(CoreError::InvalidInput(
            "the barrier construction is defined for flat interfaces".into(),
        ));
    }
    let n = grid.n;
    let mut f_sup = 0.0f64;
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        match grid.class(idx) {
            NodeClass::InteriorPlus => f_sup = f_sup.max(problem.f_plus.eval(&x).abs()),
            NodeClass::InteriorMinus => f_sup = f_sup.max(problem.f_minus.eval(&x).abs()),
            _ => {}
        }
    }
    let mut g_sup = 0.0f64;
    for d in grid.interface_nodes() {
        g_sup = g_sup.max(problem.g.eval(&d.gamma).abs());
    }
    let lambda = problem.op_plus.lambda;
    let cap = problem.op_plus.lambda_cap;
    let phi = problem.boundary.clone();
    let half_g = 0.5 * g_sup;
    // Brackets do not need the full solver accuracy; cap their tolerance.
    let barrier_params = SolveParams { tolerance: params.tolerance.max(1e-8), ..params.clone() };

    let lower_bc = move |x: &[f64; 3]| phi.eval(x) - half_g * x[n - 1].abs();
    let m_minus = EllipticOperator::pucci_minus(lambda, cap);
    let under_psi = solve_dirichlet(&m_minus, f_sup, &lower_bc, grid, scheme, &barrier_params)?;

    let phi2 = problem.boundary.clone();
    let upper_bc = move |x: &[f64; 3]| phi2.eval(x) + half_g * x[n - 1].abs();
    let m_plus = EllipticOperator::pucci_plus(lambda, cap);
    let over_psi = solve_dirichlet(&m_plus, -f_sup, &upper_bc, grid, scheme, &barrier_params)?;

    let mut under = GridField::zeros(grid);
    let mut over = GridField::zeros(grid);
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        let kink = half_g * x[n - 1].abs();
        under.set(idx, under_psi.value(idx) + kink);
        over.set(idx, over_psi.value(idx) - kink);
    }
    Ok((under, over))
}

/// Solves the transmission problem by damped Gauss-Seidel sweeps.  Flat
/// problems are seeded at the Perron subsolution (bracket recorded in the
/// report); curved problems start from zero.  Nonconvergence is reported,
/// not an error.
pub fn solve(
    problem: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
) -> Result<SolveReport, CoreError> {
    let (init, bracket) = if problem.iface.is_flat() && params.bracket_seed {
        match perron_barriers(problem, grid, scheme, params) {
            Ok((under, over)) => (under.values().to_vec(), Some((under, over))),
            // When the sweep budget is too small even for the barrier
            // solves, fall back to a cold start; the main iteration then
            // reports nonconvergence itself.
            Err(CoreError::NonConvergence { .. }) => (vec![0.0; grid.num_nodes()], None),
            Err(e) => return Err(e),
        }
    } else {
        (vec![0.0; grid.num_nodes()], None)
    };
    solve_from(problem, grid, scheme, params, init, bracket)
}

/// Like [`solve`] but seeded from a caller-supplied field (refinement warm
/// starts).  No bracket is recorded.
pub fn solve_with_init(
    problem: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
    init: &GridField,
) -> Result<SolveReport, CoreError> {
    solve_from(problem, grid, scheme, params, init.values().to_vec(), None)
}

fn solve_from(
    problem: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    params: &SolveParams,
    init: Vec<f64>,
    bracket: Option<(GridField, GridField)>,
) -> Result<SolveReport, CoreError> {
    params.validate()?;
    problem.validate()?;
    problem.check_finite_on(grid)?;
    let system = build_transmission_system(problem, grid, scheme)?;
    let data_norm = problem.data_norm(grid);
    let eff_tol = params.tolerance * (1.0 + data_norm);
    // The seed is a subsolution only up to the barrier solve accuracy;
    // the monotonicity observation uses a matching tolerance.
    let mono_tol = if bracket.is_some() {
        10.0 * params.tolerance.max(1e-8) * (1.0 + data_norm)
    } else {
        1e-12
    };
    let outcome = run_sweeps(&system, init, params, eff_tol, mono_tol);
    Ok(SolveReport {
        field: GridField::from_values(grid, outcome.vals)?,
        sweeps: outcome.history.len(),
        converged: outcome.converged,
        effective_tolerance: eff_tol,
        monotone_iterates: outcome.monotone,
        residual_nonmonotone: outcome.nonmonotone_residual,
        final_damping: outcome.final_damping,
        residual_history: outcome.history,
        bracket,
    })
}

/// Order-independent oracle for tiny grids: damped Jacobi (simultaneous
/// updates) run to an absolute residual of 1e-12.
pub fn brute_force_solve(
    problem: &TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
) -> Result<GridField, CoreError> {
    if grid.cells > 9 {
        return Err(CoreError::InvalidInput(
            "brute-force oracle is restricted to grids of at most 9 cells per axis".into(),
        ));
    }
    problem.validate()?;
    let system = build_transmission_system(problem, grid, scheme)?;
    let mut vals = vec![0.0; grid.num_nodes()];
    system.apply_fixed(&mut vals);
    let damping = 0.8;
    let tol = 1e-12;
    let mut snapshot = vals.clone();
    for _ in 0..1_000_000usize {
        if system.max_residual(&vals) <= tol {
            return GridField::from_values(grid, vals);
        }
        snapshot.clone_from(&vals);
        for &idx in &system.unknowns {
            let idx = idx as usize;
            let c0 = snapshot[idx];
            let (r0, s0) = system.eqs[idx].residual_slope(&snapshot, c0);
            let sol = system.eqs[idx].solve_center(&snapshot, c0, r0, s0, tol * 0.05);
            vals[idx] = c0 + damping * (sol - c0);
        }
    }
    Err(CoreError::NonConvergence { residual: system.max_residual(&vals), sweeps: 1_000_000 })
}

/// Multilinear prolongation of a field onto a finer grid for the same
/// problem; used as a warm start in refinement studies.
pub fn prolong(coarse: &GridField, fine: &Arc<Grid>) -> GridField {
    let cg = &coarse.grid;
    let cdims = cg.dims();
    let sample = |x: &[f64; 3]| -> f64 {
        let n = cg.n;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..n {
            let t = ((x[a] + 1.0) / cg.h).clamp(0.0, (cdims[a] - 1) as f64);
            let i = (t.floor() as usize).min(cdims[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        let corners = 1usize << n;
        for corner in 0..corners {
            let mut weight = 1.0;
            let mut ii = [0usize; 3];
            for a in 0..n {
                let hi = (corner >> a) & 1 == 1;
                ii[a] = base[a] + hi as usize;
                weight *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            let idx = ii[0] + cdims[0] * (ii[1] + cdims[1] * ii[2]);
            acc += weight * coarse.value(idx);
        }
        acc
    };
    GridField::from_fn(fine, sample)
}
