//! Tangential regularizations and convex-envelope calculus.
//!
//! The upper/lower eps-envelopes regularize a field along the directions
//! parallel to the interface only: per grid slab {x_n = const},
//! u^eps(y') = max_x' [u(x') - |x'-y'|^2/eps].  They are computed exactly on
//! the grid by the linear-time lower-envelope-of-parabolas transform,
//! separably per tangential axis.
//!
//! The convex envelope of sampled values (largest convex minorant on the
//! node set) is computed by iterated directional convexification: along each
//! lattice direction every line is replaced by its exact 1D lower convex
//! hull, repeated to a fixed point.

use crate::error::CoreError;
use crate::grid::{Grid, GridField};
use serde::Serialize;
use std::sync::Arc;

/// Parameters of the tangential regularization.  The shift radius
/// r_eps = sqrt(2 eps ||u||_inf) is always derived, never stored.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeParams {
    pub epsilon: f64,
    /// Working patch radius (the square has rho = 1).
    pub rho: f64,
}

impl EnvelopeParams {
    pub fn new(epsilon: f64, rho: f64) -> Result<Self, CoreError> {
        if !(epsilon > 0.0 && rho > 0.0) {
            return Err(CoreError::InvalidInput("epsilon and rho must be positive".into()));
        }
        Ok(Self { epsilon, rho })
    }

    pub fn r_eps(&self, sup_u: f64) -> f64 {
        (2.0 * self.epsilon * sup_u).sqrt()
    }

    /// Tangential Lipschitz bound of the envelope.
    pub fn lipschitz_bound(&self) -> f64 {
        6.0 * self.rho / self.epsilon
    }
}

/// Lower envelope of parabolas: out[j] = min_i (f[i] + (x_j - x_i)^2 / eps)
/// on a uniform grid of spacing h.  Exact.
fn parabola_lower_envelope(f: &[f64], h: f64, eps: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let inv = 1.0 / eps;
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    // intersection abscissa of the parabolas rooted at p and q
    let intersect = |p: usize, q: usize| -> f64 {
        let xp = p as f64 * h;
        let xq = q as f64 * h;
        ((f[p] - f[q]) / inv + xp * xp - xq * xq) / (2.0 * (xp - xq))
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (j, o) in out.iter_mut().enumerate() {
        let x = j as f64 * h;
        while z[k + 1] < x {
            k += 1;
        }
        let xv = v[k] as f64 * h;
        *o = f[v[k]] + (x - xv) * (x - xv) * inv;
    }
}

fn transform_lines(grid: &Grid, values: &mut [f64], axis: usize, eps: f64, upper: bool) {
    let dims = grid.dims();
    let mut line = Vec::new();
    let mut out = Vec::new();
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let len = dims[axis];
    let mut starts = Vec::new();
    for idx in 0..grid.num_nodes() {
        let coord = match axis {
            0 => idx % dims[0],
            1 => (idx / dims[0]) % dims[1],
            _ => idx / (dims[0] * dims[1]),
        };
        if coord == 0 {
            starts.push(idx);
        }
    }
    for s in starts {
        line.clear();
        for t in 0..len {
            let v = values[s + t * stride];
            line.push(if upper { -v } else { v });
        }
        parabola_lower_envelope(&line, grid.h, eps, &mut out);
        for t in 0..len {
            values[s + t * stride] = if upper { -out[t] } else { out[t] };
        }
    }
}

/// Upper eps-envelope in the tangential directions:
/// u^eps(y', y_n) = max over grid x' of u(x', y_n) - |x' - y'|^2/eps.
pub fn upper_envelope_xprime(u: &GridField, eps: f64) -> Result<GridField, CoreError> {
    envelope_xprime(u, eps, true)
}

/// Lower eps-envelope: the inf-convolution dual of the upper envelope.
pub fn lower_envelope_xprime(u: &GridField, eps: f64) -> Result<GridField, CoreError> {
    envelope_xprime(u, eps, false)
}

fn envelope_xprime(u: &GridField, eps: f64, upper: bool) -> Result<GridField, CoreError> {
    if !(eps > 0.0) {
        return Err(CoreError::InvalidInput("envelope eps must be > 0".into()));
    }
    let grid: &Arc<Grid> = &u.grid;
    let mut values = u.values().to_vec();
    for axis in 0..grid.n - 1 {
        transform_lines(grid, &mut values, axis, eps, upper);
    }
    GridField::from_values(grid, values)
}

/// Exact 1D lower convex hull of uniformly spaced samples (the largest
/// convex minorant on the sample points).
pub fn convex_envelope_1d(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n <= 2 {
        return values.to_vec();
    }
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it sits on or above the chord a--i
            let lhs = (values[b] - values[a]) * (i - a) as f64;
            let rhs = (values[i] - values[a]) * (b - a) as f64;
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; n];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = values[a] + t * (values[b] - values[a]);
        }
    }
    if hull.len() == 1 {
        out[hull[0]] = values[hull[0]];
    }
    out
}

/// Rectangular patch of sampled values for 2D convex envelopes.
#[derive(Clone, Debug)]
pub struct Patch2 {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl Patch2 {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != nx * ny {
            return Err(CoreError::InvalidInput("patch size mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("patch values must be finite".into()));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.nx * j]
    }
}

/// Directions matching the wide-stencil frame set (radius 2).
pub fn stencil_directions() -> Vec<(i32, i32)> {
    vec![(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a.rem_euclid(b))
    }
}

/// All coprime lattice directions with components bounded by `max_component`
/// (one representative per +-pair); richer sets close the direction-poverty
/// gap on small patches.
pub fn dense_directions(max_component: i32) -> Vec<(i32, i32)> {
    let mut dirs = vec![(0, 1)];
    for p in 1..=max_component {
        for q in -max_component..=max_component {
            if gcd(p, q.abs()) == 1 {
                dirs.push((p, q));
            }
        }
    }
    dirs
}

/// Largest directionally-convex minorant of the patch values: along every
/// lattice line in each direction the values are replaced by their 1D convex
/// hull, iterated to a fixed point (tolerance 1e-12 relative to the
/// oscillation).
pub fn convex_envelope_patch(
    patch: &Patch2,
    dirs: &[(i32, i32)],
    max_passes: usize,
) -> Result<Vec<f64>, CoreError> {
    let (nx, ny) = (patch.nx, patch.ny);
    let mut vals = patch.values.clone();
    let osc = {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let tol = 1e-12 * (1.0 + osc.abs());
    let mut line_vals: Vec<f64> = Vec::new();
    let mut line_idx: Vec<usize> = Vec::new();
    for pass in 0..max_passes {
        let mut change = 0.0f64;
        for &(p, q) in dirs {
            let (p, q) = (p as i64, q as i64);
            for j0 in 0..ny as i64 {
                for i0 in 0..nx as i64 {
                    // start only at line entry points
                    let prev_i = i0 - p;
                    let prev_j = j0 - q;
                    if (0..nx as i64).contains(&prev_i) && (0..ny as i64).contains(&prev_j) {
                        continue;
                    }
                    line_vals.clear();
                    line_idx.clear();
                    let (mut i, mut j) = (i0, j0);
                    while (0..nx as i64).contains(&i) && (0..ny as i64).contains(&j) {
                        let idx = i as usize + nx * j as usize;
                        line_idx.push(idx);
                        line_vals.push(vals[idx]);
                        i += p;
                        j += q;
                    }
                    if line_vals.len() < 3 {
                        continue;
                    }
                    let hull = convex_envelope_1d(&line_vals);
                    for (t, &idx) in line_idx.iter().enumerate() {
                        let d = vals[idx] - hull[t];
                        if d > change {
                            change = d;
                        }
                        vals[idx] = hull[t];
                    }
                }
            }
        }
        if change <= tol {
            return Ok(vals);
        }
        if pass + 1 == max_passes {
            return Err(CoreError::NonConvergence { residual: change, sweeps: max_passes });
        }
    }
    Ok(vals)
}

/// Convex envelope of a 2D patch: dense coprime directions for small patches
/// (where the supporting-plane oracle pins exactness), the stencil direction
/// set for large ones.
pub fn convex_envelope(patch: &Patch2) -> Result<Vec<f64>, CoreError> {
    let dirs = if patch.nx.max(patch.ny) <= 33 {
        dense_directions(((patch.nx.max(patch.ny) as i32 - 1) / 2).max(2))
    } else {
        stencil_directions()
    };
    convex_envelope_patch(patch, &dirs, 400)
}

/// Nodes where the value touches its envelope within `tol`.
pub fn contact_set(values: &[f64], envelope: &[f64], tol: f64) -> Vec<usize> {
    values
        .iter()
        .zip(envelope.iter())
        .enumerate()
        .filter(|(_, (v, e))| (*v - *e).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Default contact tolerance: 1e-9 * (1 + osc v).
pub fn default_contact_tol(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    1e-9 * (1.0 + (hi - lo))
}
