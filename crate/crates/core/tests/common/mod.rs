#![allow(dead_code)]
//! Shared oracles and corpus builders for the integration tests.  The
//! oracles are deliberately brute-force and independent of the library
//! implementations they check.

use rand::Rng;
use translab_core::grid::ScalarField;
use translab_core::*;

/// Brute-force Pucci evaluation over a dense grid of orthonormal frames
/// (cos t, sin t), (-sin t, cos t): the extremal frame sum converges to the
/// Pucci value from inside as the angle grid refines.
pub fn pucci_frame_oracle(
    m: &SymMatrix,
    lambda: f64,
    lambda_cap: f64,
    angles: usize,
    minus: bool,
) -> f64 {
    let mut best = if minus { f64::INFINITY } else { f64::NEG_INFINITY };
    for k in 0..angles {
        let t = std::f64::consts::FRAC_PI_2 * (k as f64) / (angles as f64);
        let e1 = [t.cos(), t.sin(), 0.0];
        let e2 = [-t.sin(), t.cos(), 0.0];
        let mut s = 0.0;
        for e in [e1, e2] {
            let c = m.quad(&e);
            s += if minus {
                lambda * c.max(0.0) - lambda_cap * (-c).max(0.0)
            } else {
                lambda_cap * c.max(0.0) - lambda * (-c).max(0.0)
            };
        }
        best = if minus { best.min(s) } else { best.max(s) };
    }
    best
}

/// Brute-force discrete convex envelope: the lower convex hull of the lifted
/// samples, computed as the minimum over all supporting simplices -- single
/// points, collinear pairs, and containing triangles -- of the affine
/// interpolation at each node.
pub fn supporting_plane_envelope(nx: usize, ny: usize, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), nx * ny);
    let npts = nx * ny;
    let px = |i: usize| (i % nx) as f64;
    let py = |i: usize| (i / nx) as f64;
    let mut env = v.to_vec();

    // chords between every pair, evaluated at the lattice nodes they cross
    for a in 0..npts {
        for b in (a + 1)..npts {
            let (xa, ya, xb, yb) = (px(a), py(a), px(b), py(b));
            let dx = xb - xa;
            let dy = yb - ya;
            let len2 = dx * dx + dy * dy;
            for q in 0..npts {
                let cross = dx * (py(q) - ya) - dy * (px(q) - xa);
                if cross.abs() > 1e-9 {
                    continue;
                }
                let dot = (px(q) - xa) * dx + (py(q) - ya) * dy;
                if dot < -1e-9 || dot > len2 + 1e-9 {
                    continue;
                }
                let t = dot / len2;
                let val = v[a] + t * (v[b] - v[a]);
                if val < env[q] {
                    env[q] = val;
                }
            }
        }
    }

    // every nondegenerate triangle, evaluated at nodes inside it
    for a in 0..npts {
        let (xa, ya) = (px(a), py(a));
        for b in (a + 1)..npts {
            let (xb, yb) = (px(b), py(b));
            for c in (b + 1)..npts {
                let (xc, yc) = (px(c), py(c));
                let det = (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya);
                if det.abs() < 1e-12 {
                    continue;
                }
                let lo_x = xa.min(xb).min(xc) as usize;
                let hi_x = xa.max(xb).max(xc) as usize;
                let lo_y = ya.min(yb).min(yc) as usize;
                let hi_y = ya.max(yb).max(yc) as usize;
                for j in lo_y..=hi_y {
                    for i in lo_x..=hi_x {
                        let q = i + nx * j;
                        let (xq, yq) = (i as f64, j as f64);
                        let l1 = ((xb - xq) * (yc - yq) - (xc - xq) * (yb - yq)) / det;
                        let l2 = ((xc - xq) * (ya - yq) - (xa - xq) * (yc - yq)) / det;
                        let l3 = 1.0 - l1 - l2;
                        if l1 < -1e-12 || l2 < -1e-12 || l3 < -1e-12 {
                            continue;
                        }
                        let val = l1 * v[a] + l2 * v[b] + l3 * v[c];
                        if val < env[q] {
                            env[q] = val;
                        }
                    }
                }
            }
        }
    }
    env
}

pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.max(1e-300).ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(ly.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Random polynomial of degree <= 2 in (x1, x2) with coefficients in
/// [-amp, amp], plus a constant offset.
pub fn random_poly2(rng: &mut impl Rng, amp: f64, offset: f64) -> ScalarField {
    let c: Vec<f64> = (0..6).map(|_| rng.random_range(-amp..amp)).collect();
    ScalarField::new(move |x| {
        offset
            + c[0]
            + c[1] * x[0]
            + c[2] * x[1]
            + c[3] * x[0] * x[0]
            + c[4] * x[0] * x[1]
            + c[5] * x[1] * x[1]
    })
}

/// Random polynomial that is nonnegative on the square: a + b x1^2 + c x2^2
/// with a, b, c >= 0.
pub fn random_nonneg_poly2(rng: &mut impl Rng, amp: f64) -> ScalarField {
    let a = rng.random_range(0.0..amp);
    let b = rng.random_range(0.0..amp);
    let c = rng.random_range(0.0..amp);
    ScalarField::new(move |x| a + b * x[0] * x[0] + c * x[1] * x[1])
}

/// Mixed-Pucci operator pair, alternating which side carries which extreme.
pub fn mixed_ops(k: usize) -> (EllipticOperator, EllipticOperator) {
    if k % 2 == 0 {
        (EllipticOperator::pucci_minus(1.0, 2.0), EllipticOperator::pucci_plus(1.0, 2.0))
    } else {
        (EllipticOperator::pucci_plus(1.0, 2.0), EllipticOperator::pucci_minus(1.0, 2.0))
    }
}

/// Random flat problem with positive jump data (so ABP denominators stay
/// away from zero).
pub fn random_flat_problem(rng: &mut impl Rng, k: usize) -> TransmissionProblem {
    let (op_plus, op_minus) = mixed_ops(k);
    let g0 = rng.random_range(0.3..1.2);
    TransmissionProblem {
        op_plus,
        op_minus,
        f_plus: random_poly2(rng, 1.0, 0.0),
        f_minus: random_poly2(rng, 1.0, 0.0),
        g: random_poly2(rng, 0.4, g0),
        boundary: random_poly2(rng, 0.5, 0.0),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    }
}
