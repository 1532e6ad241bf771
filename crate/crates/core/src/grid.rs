//! Classified Cartesian grids, monotone wide-stencil discretization of the
//! interior operators, and one-sided discretization of the transmission
//! condition.
//!
//! The grid spans the square [-1,1]^n with an even number of cells per axis,
//! so the flat interface x_n = 0 falls on a grid line.  Curved interfaces are
//! snapped: per tangential column the node nearest to psi(x') is the
//! Interface node.  The transmission condition at a snapped node is enforced
//! through vertical one-sided differences: for continuous solutions the
//! gradient jump across the graph is parallel to the normal, so
//! u_nu^+ - u_nu^- = g is equivalent to u_{x_n}^+ - u_{x_n}^- = g * nu_n,
//! which needs no tangential ghost values and stays inside each column.

use crate::error::CoreError;
use crate::geometry::{DomainSpec, InterfaceGraph, Shape};
use crate::matrix::SymMatrix;
use crate::operators::{EllipticOperator, OperatorKind};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Classification of a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    InteriorPlus,
    InteriorMinus,
    Interface,
    Boundary,
}

/// An orthogonal frame of integer stencil directions.
#[derive(Clone, Debug)]
pub struct Frame {
    pub dirs: Vec<[i8; 3]>,
}

impl Frame {
    fn len_sq(dir: &[i8; 3]) -> f64 {
        dir.iter().map(|&d| (d as f64) * (d as f64)).sum()
    }
}

/// Direction set for the wide-stencil discretization: orthogonal frames of
/// integer offsets, always containing the axis frame.  Radius 1 adds the
/// diagonal frames; radius 2 adds the arctan(1/2) rotations in each
/// coordinate plane.
#[derive(Clone, Debug)]
pub struct StencilScheme {
    pub n: usize,
    pub radius: u8,
    /// Formal consistency order of the per-direction second differences.
    pub order: u8,
    pub frames: Vec<Frame>,
}

impl StencilScheme {
    pub fn new(n: usize, radius: u8) -> Result<Self, CoreError> {
        if n != 2 && n != 3 {
            return Err(CoreError::InvalidInput(format!("dimension must be 2 or 3, got {n}")));
        }
        if radius != 1 && radius != 2 {
            return Err(CoreError::InvalidInput(format!("stencil radius must be 1 or 2, got {radius}")));
        }
        let mut frames = Vec::new();
        if n == 2 {
            frames.push(Frame { dirs: vec![[1, 0, 0], [0, 1, 0]] });
            frames.push(Frame { dirs: vec![[1, 1, 0], [1, -1, 0]] });
            if radius == 2 {
                frames.push(Frame { dirs: vec![[2, 1, 0], [-1, 2, 0]] });
                frames.push(Frame { dirs: vec![[1, 2, 0], [-2, 1, 0]] });
            }
        } else {
            frames.push(Frame { dirs: vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]] });
            frames.push(Frame { dirs: vec![[1, 1, 0], [1, -1, 0], [0, 0, 1]] });
            frames.push(Frame { dirs: vec![[1, 0, 1], [1, 0, -1], [0, 1, 0]] });
            frames.push(Frame { dirs: vec![[0, 1, 1], [0, 1, -1], [1, 0, 0]] });
            if radius == 2 {
                frames.push(Frame { dirs: vec![[2, 1, 0], [-1, 2, 0], [0, 0, 1]] });
                frames.push(Frame { dirs: vec![[1, 2, 0], [-2, 1, 0], [0, 0, 1]] });
                frames.push(Frame { dirs: vec![[2, 0, 1], [-1, 0, 2], [0, 1, 0]] });
                frames.push(Frame { dirs: vec![[1, 0, 2], [-2, 0, 1], [0, 1, 0]] });
                frames.push(Frame { dirs: vec![[0, 2, 1], [0, -1, 2], [1, 0, 0]] });
                frames.push(Frame { dirs: vec![[0, 1, 2], [0, -2, 1], [1, 0, 0]] });
            }
        }
        Ok(Self { n, radius, order: 2, frames })
    }

    pub fn default_for(n: usize) -> Self {
        Self::new(n, 1).expect("radius 1 is always valid")
    }
}

/// Geometric data cached for every Interface node.
#[derive(Clone, Debug)]
pub struct InterfaceNodeData {
    pub node: usize,
    /// Foot point (x', psi(x')) where the jump datum g is sampled.
    pub gamma: [f64; 3],
    /// Unit normal at the foot point.
    pub normal: [f64; 3],
    /// Vertical component of the normal.
    pub nu_n: f64,
    /// Signed vertical offset of the node from the graph, in [-h/2, h/2].
    pub delta: f64,
    /// Second-order one-sided vertical derivatives of u^+/u^- at the foot
    /// point (used by the discrete transmission equation).
    pub d_plus: OneSidedStencil,
    pub d_minus: OneSidedStencil,
    /// Third-order versions for the independent jump measurement.
    pub d_plus_hi: OneSidedStencil,
    pub d_minus_hi: OneSidedStencil,
}

/// Vertical derivative at the foot point as a linear combination of nodal
/// values along the column.  Built from the Lagrange interpolant through
/// same-side nodes only; when the snapped node lies on the other side of the
/// graph it is excluded and the stencil shifts one level outward.
#[derive(Clone, Debug)]
pub struct OneSidedStencil {
    /// (node, coefficient) pairs.
    pub terms: Vec<(usize, f64)>,
}

impl OneSidedStencil {
    /// Applies the stencil; `plus_side` selects which trace to read at
    /// interface nodes of fields carrying a prescribed trace jump.
    pub fn apply(&self, u: &GridField, plus_side: bool) -> f64 {
        self.terms
            .iter()
            .map(|&(node, c)| {
                let v = if plus_side { u.value_plus(node) } else { u.value_minus(node) };
                c * v
            })
            .sum()
    }
}

/// Derivative-at-zero weights of the Lagrange interpolant through the
/// abscissae `ts`.
fn lagrange_derivative_at_zero(ts: &[f64]) -> Vec<f64> {
    let k = ts.len();
    let mut coeffs = vec![0.0; k];
    for i in 0..k {
        let mut denom = 1.0;
        for j in 0..k {
            if j != i {
                denom *= ts[i] - ts[j];
            }
        }
        // d/dx prod_{j != i} (x - t_j) at 0: sum over j of prod_{k != i,j} (-t_k)
        let mut num = 0.0;
        for j in 0..k {
            if j == i {
                continue;
            }
            let mut prod = 1.0;
            for l in 0..k {
                if l != i && l != j {
                    prod *= -ts[l];
                }
            }
            num += prod;
        }
        coeffs[i] = num / denom;
    }
    coeffs
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub n: usize,
    pub cells: usize,
    pub h: f64,
    dims: [usize; 3],
    class: Vec<NodeClass>,
    iface_data: Vec<InterfaceNodeData>,
    /// Map node index -> position in `iface_data` (usize::MAX if none).
    pub(crate) iface_slot: Vec<u32>,
    pub iface: InterfaceGraph,
    pub domain: DomainSpec,
}

impl Grid {
    /// Builds and classifies the grid.  `cells` must be even and >= 8 so the
    /// flat interface lies on a grid line; the graph must stay at least 3h
    /// away from the top and bottom faces so the one-sided stencils fit.
    pub fn build(domain: DomainSpec, iface: InterfaceGraph, cells: usize) -> Result<Arc<Self>, CoreError> {
        if cells < 8 {
            return Err(CoreError::Grid(format!("cells_per_axis must be >= 8, got {cells}")));
        }
        if cells % 2 != 0 {
            return Err(CoreError::Grid(format!("cells_per_axis must be even, got {cells}")));
        }
        if iface.dim() != domain.n {
            return Err(CoreError::Grid("interface dimension does not match domain".into()));
        }
        let n = domain.n;
        let h = 2.0 / cells as f64;
        let nodes_per_axis = cells + 1;
        let dims = if n == 2 {
            [nodes_per_axis, nodes_per_axis, 1]
        } else {
            [nodes_per_axis, nodes_per_axis, nodes_per_axis]
        };
        let ncols = if n == 2 { dims[0] } else { dims[0] * dims[1] };

        // Snap the interface to the nearest vertical level per column.
        let mut iface_level = vec![0usize; ncols];
        for col in 0..ncols {
            let (i, j) = if n == 2 { (col, 0) } else { (col % dims[0], col / dims[0]) };
            let xp = [-1.0 + h * i as f64, -1.0 + h * j as f64, 0.0];
            let psi = iface.eval(&xp);
            let level = ((psi + 1.0) / h + 0.5).floor();
            if !(4.0..=(cells as f64 - 4.0)).contains(&level) {
                return Err(CoreError::Grid(format!(
                    "interface exits the domain band: psi({:.3},{:.3}) = {psi:.3} needs 4h clearance",
                    xp[0], xp[1]
                )));
            }
            iface_level[col] = level as usize;
        }

        let total = dims[0] * dims[1] * dims[2];
        let mut class = vec![NodeClass::Boundary; total];
        let mut iface_data = Vec::new();
        let mut iface_slot = vec![u32::MAX; total];
        for idx in 0..total {
            let (i, j, k) = Self::split_idx(dims, idx);
            let x = Self::coords_of(n, h, i, j, k);
            let on_edge = if n == 2 {
                i == 0 || i == cells || j == 0 || j == cells
            } else {
                i == 0 || i == cells || j == 0 || j == cells || k == 0 || k == cells
            };
            let outside_ball = domain.shape == Shape::UnitBall && {
                let r2: f64 = x.iter().take(n).map(|v| v * v).sum();
                r2 >= 1.0 - 1e-14
            };
            if on_edge || outside_ball {
                class[idx] = NodeClass::Boundary;
                continue;
            }
            let (col, level) = if n == 2 { (i, j) } else { (i + dims[0] * j, k) };
            let kstar = iface_level[col];
            class[idx] = if level == kstar {
                let xp = x;
                let mut gamma = xp;
                let psi = iface.eval(&xp);
                gamma[n - 1] = psi;
                let delta = x[n - 1] - psi;
                let vertical = |steps: i64| -> usize {
                    let (i, j, k) = Self::split_idx(dims, idx);
                    let mut coords = [i as i64, j as i64, k as i64];
                    coords[n - 1] += steps;
                    (coords[0] + dims[0] as i64 * (coords[1] + dims[1] as i64 * coords[2])) as usize
                };
                // one-sided stencils anchored at the foot point; the center
                // joins the side it actually lies on (flat: both, exactly
                // reproducing the classical one-sided differences)
                let build_stencil = |up: bool, order: usize| -> OneSidedStencil {
                    let include_center = if up { delta >= 0.0 } else { delta <= 0.0 };
                    let sgn = if up { 1i64 } else { -1i64 };
                    let mut ts = Vec::with_capacity(order + 1);
                    let mut nodes = Vec::with_capacity(order + 1);
                    if include_center {
                        ts.push(delta);
                        nodes.push(idx);
                        for s in 1..=(order as i64) {
                            ts.push(delta + (sgn * s) as f64 * h);
                            nodes.push(vertical(sgn * s));
                        }
                    } else {
                        for s in 1..=(order as i64 + 1) {
                            ts.push(delta + (sgn * s) as f64 * h);
                            nodes.push(vertical(sgn * s));
                        }
                    }
                    let coeffs = lagrange_derivative_at_zero(&ts);
                    OneSidedStencil {
                        terms: nodes.into_iter().zip(coeffs).collect(),
                    }
                };
                iface_slot[idx] = iface_data.len() as u32;
                iface_data.push(InterfaceNodeData {
                    node: idx,
                    gamma,
                    normal: iface.normal_at(&xp),
                    nu_n: iface.normal_vertical(&xp),
                    delta,
                    d_plus: build_stencil(true, 2),
                    d_minus: build_stencil(false, 2),
                    d_plus_hi: build_stencil(true, 3),
                    d_minus_hi: build_stencil(false, 3),
                });
                NodeClass::Interface
            } else if level > kstar {
                NodeClass::InteriorPlus
            } else {
                NodeClass::InteriorMinus
            };
        }

        let grid = Self { n, cells, h, dims, class, iface_data, iface_slot, iface, domain };
        grid.validate_axis_stencils()?;
        Ok(Arc::new(grid))
    }

    /// Every interior node must see only same-side or interface/boundary
    /// nodes along the axis frame; a violation means the graph is too steep
    /// for this resolution.
    fn validate_axis_stencils(&self) -> Result<(), CoreError> {
        for idx in 0..self.num_nodes() {
            let side = match self.class[idx] {
                NodeClass::InteriorPlus => 1i8,
                NodeClass::InteriorMinus => -1i8,
                _ => continue,
            };
            for axis in 0..self.n {
                for sgn in [-1i64, 1] {
                    let mut dir = [0i8; 3];
                    dir[axis] = sgn as i8;
                    let nb = self.offset(idx, &dir).expect("interior nodes have axis neighbors");
                    if self.strictly_opposite(nb, side) {
                        return Err(CoreError::Grid(format!(
                            "interface too steep: node {idx} has an opposite-side axis neighbor"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn split_idx(dims: [usize; 3], idx: usize) -> (usize, usize, usize) {
        let i = idx % dims[0];
        let j = (idx / dims[0]) % dims[1];
        let k = idx / (dims[0] * dims[1]);
        (i, j, k)
    }

    fn coords_of(n: usize, h: f64, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        x[0] = -1.0 + h * i as f64;
        x[1] = -1.0 + h * j as f64;
        if n == 3 {
            x[2] = -1.0 + h * k as f64;
        }
        x
    }

    pub fn num_nodes(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = Self::split_idx(self.dims, idx);
        Self::coords_of(self.n, self.h, i, j, k)
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class
    }

    /// Node index offset by an integer direction, or None if it leaves the
    /// array.
    pub fn offset(&self, idx: usize, dir: &[i8; 3]) -> Option<usize> {
        let (i, j, k) = Self::split_idx(self.dims, idx);
        let ni = i as i64 + dir[0] as i64;
        let nj = j as i64 + dir[1] as i64;
        let nk = k as i64 + dir[2] as i64;
        if ni < 0 || nj < 0 || nk < 0 {
            return None;
        }
        let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
        if ni >= self.dims[0] || nj >= self.dims[1] || nk >= self.dims[2] {
            return None;
        }
        Some(ni + self.dims[0] * (nj + self.dims[1] * nk))
    }

    /// Vertical neighbor (along x_n) `steps` levels away.
    pub fn vertical_neighbor(&self, idx: usize, steps: i64) -> Option<usize> {
        let mut dir = [0i8; 3];
        dir[self.n - 1] = steps as i8;
        self.offset(idx, &dir)
    }

    fn strictly_opposite(&self, idx: usize, side: i8) -> bool {
        match self.class[idx] {
            NodeClass::InteriorPlus => side < 0,
            NodeClass::InteriorMinus => side > 0,
            _ => false,
        }
    }

    fn side_of(&self, idx: usize) -> i8 {
        match self.class[idx] {
            NodeClass::InteriorPlus => 1,
            NodeClass::InteriorMinus => -1,
            _ => 0,
        }
    }

    /// A frame is usable at a node when all its offsets stay in the array and
    /// never land strictly on the opposite side of the interface.
    pub fn frame_usable(&self, idx: usize, frame: &Frame) -> bool {
        let side = self.side_of(idx);
        for dir in &frame.dirs {
            for sgn in [1i8, -1] {
                let d = [dir[0] * sgn, dir[1] * sgn, dir[2] * sgn];
                match self.offset(idx, &d) {
                    None => return false,
                    Some(nb) => {
                        if side != 0 && self.strictly_opposite(nb, side) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn interface_nodes(&self) -> &[InterfaceNodeData] {
        &self.iface_data
    }

    pub fn interface_data(&self, idx: usize) -> Option<&InterfaceNodeData> {
        let slot = self.iface_slot[idx];
        if slot == u32::MAX {
            None
        } else {
            Some(&self.iface_data[slot as usize])
        }
    }

    pub fn node_indices(&self) -> impl Iterator<Item = usize> {
        0..self.num_nodes()
    }

    /// Nodes within the closed ball of radius r around `center` (Euclidean,
    /// first n coordinates).
    pub fn nodes_in_ball(&self, center: &[f64; 3], r: f64) -> Vec<usize> {
        let r2 = r * r;
        (0..self.num_nodes())
            .filter(|&idx| {
                let x = self.coords(idx);
                let d2: f64 = (0..self.n).map(|a| (x[a] - center[a]).powi(2)).sum();
                d2 <= r2 + 1e-14
            })
            .collect()
    }
}

/// Scalar field defined by a function of the point; wraps closures or parsed
/// expressions.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>);

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        (self.0)(x)
    }
}

/// Values on a classified grid.  Solutions of the transmission problem are
/// single-valued; fields with a prescribed trace jump across the interface
/// (used by rescaled two-sided experiments) carry an extra (u^+, u^-) pair at
/// interface nodes.
#[derive(Clone, Debug)]
pub struct GridField {
    pub grid: Arc<Grid>,
    values: Vec<f64>,
    traces: Option<BTreeMap<usize, (f64, f64)>>,
}

impl GridField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.num_nodes()], traces: None }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..grid.num_nodes()).map(|i| f(&grid.coords(i))).collect();
        Self { grid: grid.clone(), values, traces: None }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != grid.num_nodes() {
            return Err(CoreError::InvalidInput("value count does not match grid".into()));
        }
        Ok(Self { grid: grid.clone(), values, traces: None })
    }

    /// Prescribes a trace pair (u^+, u^-) at an interface node; only
    /// meaningful for jump-discontinuous experiment fields.
    pub fn set_trace_pair(&mut self, node: usize, plus: f64, minus: f64) -> Result<(), CoreError> {
        if self.grid.class(node) != NodeClass::Interface {
            return Err(CoreError::InvalidInput("trace pairs only exist at interface nodes".into()));
        }
        self.traces.get_or_insert_with(BTreeMap::new).insert(node, (plus, minus));
        Ok(())
    }

    pub fn has_trace_jump(&self) -> bool {
        self.traces.as_ref().is_some_and(|t| !t.is_empty())
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Trace seen from the plus side (falls back to the single value).
    pub fn value_plus(&self, node: usize) -> f64 {
        self.traces
            .as_ref()
            .and_then(|t| t.get(&node).map(|p| p.0))
            .unwrap_or(self.values[node])
    }

    /// Trace seen from the minus side.
    pub fn value_minus(&self, node: usize) -> f64 {
        self.traces
            .as_ref()
            .and_then(|t| t.get(&node).map(|p| p.1))
            .unwrap_or(self.values[node])
    }

    pub fn set(&mut self, node: usize, v: f64) {
        self.values[node] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_non_boundary(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.class(*i) != NodeClass::Boundary)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
    }

    /// Oscillation (max - min) over a node subset.
    pub fn oscillation(&self, nodes: &[usize]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in nodes {
            lo = lo.min(self.values[i]);
            hi = hi.max(self.values[i]);
        }
        if nodes.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Full instance of the transmission problem.
#[derive(Clone, Debug)]
pub struct TransmissionProblem {
    pub op_plus: EllipticOperator,
    pub op_minus: EllipticOperator,
    pub f_plus: ScalarField,
    pub f_minus: ScalarField,
    /// Jump datum, sampled at foot points (x', psi(x')) on the interface.
    pub g: ScalarField,
    pub boundary: ScalarField,
    pub iface: InterfaceGraph,
    pub domain: DomainSpec,
}

impl TransmissionProblem {
    pub fn validate(&self) -> Result<(), CoreError> {
        if (self.op_plus.lambda - self.op_minus.lambda).abs() > 1e-12
            || (self.op_plus.lambda_cap - self.op_minus.lambda_cap).abs() > 1e-12
        {
            return Err(CoreError::InvalidInput(
                "both operators must share the ellipticity pair".into(),
            ));
        }
        if self.iface.dim() != self.domain.n {
            return Err(CoreError::InvalidInput("interface/domain dimension mismatch".into()));
        }
        Ok(())
    }

    /// Sup norm of the data over grid samples; scales solver tolerances.
    pub fn data_norm(&self, grid: &Grid) -> f64 {
        let mut m = 0.0f64;
        for idx in grid.node_indices() {
            let x = grid.coords(idx);
            match grid.class(idx) {
                NodeClass::InteriorPlus => m = m.max(self.f_plus.eval(&x).abs()),
                NodeClass::InteriorMinus => m = m.max(self.f_minus.eval(&x).abs()),
                NodeClass::Boundary => m = m.max(self.boundary.eval(&x).abs()),
                NodeClass::Interface => {}
            }
        }
        for d in grid.interface_nodes() {
            m = m.max(self.g.eval(&d.gamma).abs());
        }
        m
    }

    /// Errors if any data field evaluates non-finitely on the grid.
    pub fn check_finite_on(&self, grid: &Grid) -> Result<(), CoreError> {
        for idx in grid.node_indices() {
            let x = grid.coords(idx);
            for (name, v) in [
                ("f_plus", self.f_plus.eval(&x)),
                ("f_minus", self.f_minus.eval(&x)),
                ("boundary", self.boundary.eval(&x)),
            ] {
                if !v.is_finite() {
                    return Err(CoreError::InvalidInput(format!(
                        "{name} is not finite at ({:.3}, {:.3}, {:.3})",
                        x[0], x[1], x[2]
                    )));
                }
            }
        }
        for d in grid.interface_nodes() {
            if !self.g.eval(&d.gamma).is_finite() {
                return Err(CoreError::InvalidInput("g is not finite on the interface".into()));
            }
        }
        Ok(())
    }
}

/// Ghost corrections for interior stencils that read an interface node from
/// the other side of the graph.  A snapped interface node stores the value
/// of u at a point offset by delta from the graph, which belongs to one
/// side; the extension of the other side differs by the known amount
/// g * nu_n * delta to first order.  Legs of interior stencils landing on
/// such nodes add this correction, which removes the O(g delta) consistency
/// loss near curved interfaces (flat interfaces have delta = 0 throughout).
#[derive(Clone, Debug)]
pub struct JumpGhosts {
    /// g * nu_n * delta per interface node, indexed like `iface_data`.
    jump_times_delta: Vec<f64>,
}

impl JumpGhosts {
    pub fn for_problem(problem: &TransmissionProblem, grid: &Grid) -> Self {
        let jump_times_delta = grid
            .interface_nodes()
            .iter()
            .map(|d| problem.g.eval(&d.gamma) * d.nu_n * d.delta)
            .collect();
        Self { jump_times_delta }
    }

    pub fn none_for(grid: &Grid) -> Self {
        Self { jump_times_delta: vec![0.0; grid.interface_nodes().len()] }
    }

    /// Correction to add to the stored value of `node` when a stencil
    /// evaluated on side `eval_side` (+1 plus, -1 minus) reads it.
    pub fn offset(&self, grid: &Grid, node: usize, eval_side: i8) -> f64 {
        match grid.interface_data(node) {
            None => 0.0,
            Some(d) => {
                let slot = grid.iface_slot[node] as usize;
                let stored_side: i8 = if d.delta >= 0.0 { 1 } else { -1 };
                0.5 * (eval_side - stored_side) as f64 * self.jump_times_delta[slot]
            }
        }
    }
}

/// Per-direction second difference normalized to unit-direction curvature:
/// (u(x+he) - 2u(x) + u(x-he)) / (h|e|)^2, with ghost corrections applied to
/// interface legs.
fn second_difference(
    grid: &Grid,
    u: &GridField,
    idx: usize,
    dir: &[i8; 3],
    center: f64,
    ghosts: Option<(&JumpGhosts, i8)>,
) -> f64 {
    let plus = grid.offset(idx, dir).expect("usability checked by caller");
    let minus = grid.offset(idx, &[-dir[0], -dir[1], -dir[2]]).expect("usability checked");
    let w = grid.h * grid.h * Frame::len_sq(dir);
    let mut vp = u.value(plus);
    let mut vm = u.value(minus);
    if let Some((g, side)) = ghosts {
        vp += g.offset(grid, plus, side);
        vm += g.offset(grid, minus, side);
    }
    (vp - 2.0 * center + vm) / w
}

/// Monotone splitting of tr(A D^2 u) into nonnegative combinations of
/// directional curvatures along axes and signed diagonals.  Returns
/// (direction, coefficient) pairs; fails when A is not diagonally dominant.
pub(crate) fn linear_splitting(a: &SymMatrix, n: usize) -> Result<Vec<([i8; 3], f64)>, CoreError> {
    let mut parts: Vec<([i8; 3], f64)> = Vec::new();
    for i in 0..n {
        let mut off: f64 = 0.0;
        for j in 0..n {
            if j != i {
                off += a.get(i, j).abs();
            }
        }
        let c = a.get(i, i) - off;
        if c < -1e-13 {
            return Err(CoreError::SchemeInapplicable(format!(
                "linear coefficient matrix is not diagonally dominant in row {i} \
                 (gap {c:.3e}); rotate the frame so off-diagonal entries shrink"
            )));
        }
        let mut dir = [0i8; 3];
        dir[i] = 1;
        parts.push((dir, c.max(0.0)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let aij = a.get(i, j);
            if aij != 0.0 {
                let mut dir = [0i8; 3];
                dir[i] = 1;
                dir[j] = if aij > 0.0 { 1 } else { -1 };
                // curvature along dir is normalized by |dir|^2 = 2
                parts.push((dir, 2.0 * aij.abs()));
            }
        }
    }
    Ok(parts)
}

/// Frame-wise extremal sum for Pucci operators: sum over the frame of
/// lambda d^+ - Lambda d^- (minus) or Lambda d^+ - lambda d^- (plus).
fn pucci_frame_sum(
    grid: &Grid,
    u: &GridField,
    idx: usize,
    frame: &Frame,
    center: f64,
    lambda: f64,
    lambda_cap: f64,
    minus: bool,
    ghosts: Option<(&JumpGhosts, i8)>,
) -> f64 {
    let mut s = 0.0;
    for dir in &frame.dirs {
        let d = second_difference(grid, u, idx, dir, center, ghosts);
        s += if minus {
            lambda * d.max(0.0) - lambda_cap * (-d).max(0.0)
        } else {
            lambda_cap * d.max(0.0) - lambda * (-d).max(0.0)
        };
    }
    s
}

fn linear_value(
    grid: &Grid,
    u: &GridField,
    idx: usize,
    parts: &[([i8; 3], f64)],
    center: f64,
    ghosts: Option<(&JumpGhosts, i8)>,
) -> Result<f64, CoreError> {
    let mut s = 0.0;
    for (dir, coeff) in parts {
        if *coeff == 0.0 {
            continue;
        }
        let frame = Frame { dirs: vec![*dir] };
        if !grid.frame_usable(idx, &frame) {
            return Err(CoreError::SchemeInapplicable(format!(
                "direction ({},{},{}) required by the linear splitting is unavailable at node {idx}",
                dir[0], dir[1], dir[2]
            )));
        }
        s += coeff * second_difference(grid, u, idx, dir, center, ghosts);
    }
    Ok(s)
}

/// Discrete interior operator at a node: the monotone wide-stencil value of
/// F(D^2 u).  Exact on quadratics whose Hessian is diagonalized by a frame of
/// the scheme (Pucci kinds) or on all quadratics (linear kinds).
pub fn discretize_interior(
    op: &EllipticOperator,
    scheme: &StencilScheme,
    grid: &Grid,
    u: &GridField,
    node: usize,
) -> Result<f64, CoreError> {
    discretize_interior_with_center(op, scheme, grid, u, node, u.value(node))
}

/// Same as [`discretize_interior`] but with the center value overridden;
/// the nodal solver uses this to treat the discrete operator as a scalar
/// function of the center unknown.
pub fn discretize_interior_with_center(
    op: &EllipticOperator,
    scheme: &StencilScheme,
    grid: &Grid,
    u: &GridField,
    node: usize,
    center: f64,
) -> Result<f64, CoreError> {
    discretize_interior_ghosted(op, scheme, grid, u, node, center, None)
}

/// Interior operator value with ghost corrections on interface legs; the
/// residual assembly and the solver pass the problem's jump data here.
pub fn discretize_interior_ghosted(
    op: &EllipticOperator,
    scheme: &StencilScheme,
    grid: &Grid,
    u: &GridField,
    node: usize,
    center: f64,
    ghosts: Option<&JumpGhosts>,
) -> Result<f64, CoreError> {
    let side = match grid.class(node) {
        NodeClass::InteriorPlus => 1i8,
        NodeClass::InteriorMinus => -1i8,
        _ => 0,
    };
    let gh = ghosts.filter(|_| side != 0).map(|g| (g, side));
    match &op.kind {
        OperatorKind::PucciMinus | OperatorKind::PucciPlus => {
            let minus = matches!(op.kind, OperatorKind::PucciMinus);
            let mut best = if minus { f64::INFINITY } else { f64::NEG_INFINITY };
            let mut any = false;
            for frame in &scheme.frames {
                if !grid.frame_usable(node, frame) {
                    continue;
                }
                any = true;
                let s =
                    pucci_frame_sum(grid, u, node, frame, center, op.lambda, op.lambda_cap, minus, gh);
                best = if minus { best.min(s) } else { best.max(s) };
            }
            if !any {
                return Err(CoreError::SchemeInapplicable(format!(
                    "no usable frame at node {node}"
                )));
            }
            Ok(best)
        }
        OperatorKind::Linear(a) => {
            let parts = linear_splitting(a, grid.n)?;
            linear_value(grid, u, node, &parts, center, gh)
        }
        OperatorKind::BellmanMin(members) => {
            let mut best = f64::INFINITY;
            for a in members {
                let parts = linear_splitting(a, grid.n)?;
                best = best.min(linear_value(grid, u, node, &parts, center, gh)?);
            }
            Ok(best)
        }
        OperatorKind::Blend { plus, minus, weight } => {
            let x = grid.coords(node);
            let hx = weight.weight(&x);
            let vp = discretize_interior_ghosted(plus, scheme, grid, u, node, center, ghosts)?;
            let vm = discretize_interior_ghosted(minus, scheme, grid, u, node, center, ghosts)?;
            Ok(hx * vp + (1.0 - hx) * vm)
        }
    }
}

/// One-sided vertical derivatives of u^+/u^- at the foot point of an
/// interface node, second order: Lagrange differences through the same-side
/// column nodes.  For flat interfaces this is the classical stencil
/// D^+ = (-3 u(z) + 4 u(z+h e_n) - u(z+2h e_n)) / (2h) and its mirror; exact
/// for functions quadratic in x_n on each side.
pub fn one_sided_vertical(grid: &Grid, u: &GridField, node: usize) -> Result<(f64, f64), CoreError> {
    let data = grid
        .interface_data(node)
        .ok_or_else(|| CoreError::InvalidInput(format!("node {node} is not an interface node")))?;
    Ok((data.d_plus.apply(u, true), data.d_minus.apply(u, false)))
}

/// Residual of the transmission condition at an interface node, in normal
/// units: (D_n^+ u - D_n^- u)/nu_n - g_val.  For continuous u the tangential
/// derivative is continuous across the graph, so the normal jump equals the
/// vertical jump divided by nu_n; flat interfaces reduce to the plain
/// one-sided difference of u_{x_n}.
pub fn discretize_transmission(
    grid: &Grid,
    u: &GridField,
    node: usize,
    g_val: f64,
    _iface: &InterfaceGraph,
) -> Result<f64, CoreError> {
    let data = grid
        .interface_data(node)
        .ok_or_else(|| CoreError::InvalidInput(format!("node {node} is not an interface node")))?;
    let (dp, dm) = one_sided_vertical(grid, u, node)?;
    Ok((dp - dm) / data.nu_n - g_val)
}

/// Assembles the full discrete residual of the transmission problem:
/// interior nodes carry F_h(u) - f, interface nodes the transmission
/// residual, boundary nodes u - phi.  A zero residual field characterizes
/// the discrete solution.  Assembly never mutates the input field and the
/// per-node work is independent, so callers may shard it over nodes.
pub fn assemble_residual(
    problem: &TransmissionProblem,
    scheme: &StencilScheme,
    grid: &Arc<Grid>,
    u: &GridField,
) -> Result<GridField, CoreError> {
    let mut res = GridField::zeros(grid);
    let ghosts = JumpGhosts::for_problem(problem, grid);
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        let r = match grid.class(idx) {
            NodeClass::InteriorPlus => {
                discretize_interior_ghosted(&problem.op_plus, scheme, grid, u, idx, u.value(idx), Some(&ghosts))?
                    - problem.f_plus.eval(&x)
            }
            NodeClass::InteriorMinus => {
                discretize_interior_ghosted(&problem.op_minus, scheme, grid, u, idx, u.value(idx), Some(&ghosts))?
                    - problem.f_minus.eval(&x)
            }
            NodeClass::Interface => {
                let data = grid.interface_data(idx).expect("classified interface node");
                discretize_transmission(grid, u, idx, problem.g.eval(&data.gamma), &problem.iface)?
            }
            NodeClass::Boundary => u.value(idx) - problem.boundary.eval(&x),
        };
        res.set(idx, r);
    }
    Ok(res)
}
