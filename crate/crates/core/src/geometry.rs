//! Interface geometry: the graph x_n = psi(x'), its normal field, the
//! domain partition it induces, and discrete Hölder seminorms of psi.
//!
//! psi is restricted to polynomials of total degree <= 4 in the tangential
//! variables, so derivatives and seminorm oracles are exact.  All operations
//! are pure and safe for concurrent use.

use crate::error::CoreError;
use crate::matrix::SymMatrix;
use serde::{Deserialize, Serialize};

pub const MAX_PSI_DEGREE: u32 = 4;

/// Which side of the interface a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    OmegaPlus,
    OmegaMinus,
    Gamma,
}

/// Computational domain shape. The Cartesian grid always spans the square
/// [-1,1]^n; for `UnitBall` the nodes outside the closed unit ball act as
/// Dirichlet boundary, so ball statements are checked on balls embedded in
/// the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    UnitSquare,
    UnitBall,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub n: usize,
}

impl DomainSpec {
    pub fn new(shape: Shape, n: usize) -> Result<Self, CoreError> {
        if n != 2 && n != 3 {
            return Err(CoreError::InvalidInput(format!("dimension must be 2 or 3, got {n}")));
        }
        Ok(Self { shape, n })
    }

    pub fn square(n: usize) -> Self {
        Self::new(Shape::UnitSquare, n).expect("n validated by caller")
    }
}

/// Interface graph psi: polynomial in x' (one variable for n = 2, two for
/// n = 3), with precomputed gradient and Hessian coefficient tables.
#[derive(Clone, Debug)]
pub struct InterfaceGraph {
    n: usize,
    /// terms[(i, j)] = coefficient of x1^i * x2^j (j = 0 throughout for n=2).
    terms: Vec<(u32, u32, f64)>,
    grad: [Vec<(u32, u32, f64)>; 2],
    hess: [[Vec<(u32, u32, f64)>; 2]; 2],
}

fn differentiate(terms: &[(u32, u32, f64)], axis: usize) -> Vec<(u32, u32, f64)> {
    terms
        .iter()
        .filter_map(|&(i, j, c)| match axis {
            0 if i > 0 => Some((i - 1, j, c * i as f64)),
            1 if j > 0 => Some((i, j - 1, c * j as f64)),
            _ => None,
        })
        .collect()
}

fn eval_terms(terms: &[(u32, u32, f64)], xp: &[f64; 2]) -> f64 {
    terms
        .iter()
        .map(|&(i, j, c)| c * xp[0].powi(i as i32) * xp[1].powi(j as i32))
        .sum()
}

/// Dense multi-index order used by configs: for n = 2 simply
/// [1, x1, x1^2, x1^3, x1^4]; for n = 3 graded lexicographic in (x1, x2):
/// 1; x1, x2; x1^2, x1 x2, x2^2; ...; up to total degree 4.
pub fn dense_multi_indices(n: usize) -> Vec<(u32, u32)> {
    let mut idx = Vec::new();
    if n == 2 {
        for d in 0..=MAX_PSI_DEGREE {
            idx.push((d, 0));
        }
    } else {
        for d in 0..=MAX_PSI_DEGREE {
            for i in (0..=d).rev() {
                idx.push((i, d - i));
            }
        }
    }
    idx
}

impl InterfaceGraph {
    /// Builds psi from the dense coefficient list (see
    /// [`dense_multi_indices`]); shorter lists are zero-padded.
    pub fn from_dense_coeffs(n: usize, coeffs: &[f64]) -> Result<Self, CoreError> {
        if n != 2 && n != 3 {
            return Err(CoreError::InvalidInput(format!("dimension must be 2 or 3, got {n}")));
        }
        let idx = dense_multi_indices(n);
        if coeffs.len() > idx.len() {
            return Err(CoreError::InvalidInput(format!(
                "psi coefficient list too long: {} entries, max {} (degree <= {})",
                coeffs.len(),
                idx.len(),
                MAX_PSI_DEGREE
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::InvalidInput("psi coefficients must be finite".into()));
        }
        let terms: Vec<(u32, u32, f64)> = idx
            .iter()
            .zip(coeffs.iter())
            .filter(|&(_, &c)| c != 0.0)
            .map(|(&(i, j), &c)| (i, j, c))
            .collect();
        Ok(Self::from_terms(n, terms))
    }

    fn from_terms(n: usize, terms: Vec<(u32, u32, f64)>) -> Self {
        let grad = [differentiate(&terms, 0), differentiate(&terms, 1)];
        let hess = [
            [differentiate(&grad[0], 0), differentiate(&grad[0], 1)],
            [differentiate(&grad[1], 0), differentiate(&grad[1], 1)],
        ];
        Self { n, terms, grad, hess }
    }

    /// The flat interface psi = 0.
    pub fn flat(n: usize) -> Self {
        Self::from_terms(n, Vec::new())
    }

    pub fn is_flat(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn xprime(&self, x: &[f64; 3]) -> [f64; 2] {
        if self.n == 2 {
            [x[0], 0.0]
        } else {
            [x[0], x[1]]
        }
    }

    /// psi at the tangential part of `x` (the x_n component of `x` is
    /// ignored, so full points can be passed directly).
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        eval_terms(&self.terms, &self.xprime(x))
    }

    /// Tangential gradient of psi; entries beyond n-1 are zero.
    pub fn gradient(&self, x: &[f64; 3]) -> [f64; 2] {
        let xp = self.xprime(x);
        [eval_terms(&self.grad[0], &xp), eval_terms(&self.grad[1], &xp)]
    }

    /// Tangential Hessian as a symmetric (n-1)x(n-1) table.
    pub fn hessian(&self, x: &[f64; 3]) -> [[f64; 2]; 2] {
        let xp = self.xprime(x);
        let h01 = eval_terms(&self.hess[0][1], &xp);
        [
            [eval_terms(&self.hess[0][0], &xp), h01],
            [h01, eval_terms(&self.hess[1][1], &xp)],
        ]
    }

    /// Unit normal at the interface point above `x`', pointing into
    /// Omega^+ = {x_n > psi(x')}.
    pub fn normal_at(&self, x: &[f64; 3]) -> [f64; 3] {
        let g = self.gradient(x);
        let mut nu = [0.0; 3];
        let norm = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
        nu[0] = -g[0] / norm;
        if self.n == 3 {
            nu[1] = -g[1] / norm;
        }
        nu[self.n - 1] = 1.0 / norm;
        nu
    }

    /// Vertical component nu_n of the unit normal.
    pub fn normal_vertical(&self, x: &[f64; 3]) -> f64 {
        let g = self.gradient(x);
        1.0 / (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt()
    }

    /// Signed vertical distance x_n - psi(x').
    pub fn height_above(&self, x: &[f64; 3]) -> f64 {
        x[self.n - 1] - self.eval(x)
    }

    /// Classifies a point against the interface with a tolerance band
    /// mapped to Gamma.
    pub fn classify_point(&self, x: &[f64; 3], tol: f64) -> Side {
        let s = self.height_above(x);
        if s > tol {
            Side::OmegaPlus
        } else if s < -tol {
            Side::OmegaMinus
        } else {
            Side::Gamma
        }
    }

    /// Discrete Hölder seminorm of the order-th derivative of psi over a
    /// uniform grid on [-1,1]^(n-1): sup over grid pairs of
    /// |D^k psi(x') - D^k psi(y')| / |x'-y'|^alpha.  A lower bound on the
    /// true seminorm, nondecreasing under refinement.
    pub fn holder_seminorm(&self, order: u32, alpha: f64, grid_pts: usize) -> Result<f64, CoreError> {
        if order != 1 && order != 2 {
            return Err(CoreError::InvalidInput(format!("seminorm order must be 1 or 2, got {order}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoreError::InvalidInput(format!("alpha must lie in (0,1], got {alpha}")));
        }
        if grid_pts < 2 {
            return Err(CoreError::InvalidInput("need at least 2 grid points".into()));
        }
        let coords: Vec<f64> = (0..grid_pts)
            .map(|i| -1.0 + 2.0 * i as f64 / (grid_pts - 1) as f64)
            .collect();
        let mut pts: Vec<[f64; 3]> = Vec::new();
        if self.n == 2 {
            for &a in &coords {
                pts.push([a, 0.0, 0.0]);
            }
        } else {
            for &a in &coords {
                for &b in &coords {
                    pts.push([a, b, 0.0]);
                }
            }
        }
        let mut sup: f64 = 0.0;
        for (k, p) in pts.iter().enumerate() {
            for q in pts.iter().skip(k + 1) {
                let dx = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                if dx == 0.0 {
                    continue;
                }
                let diff = match order {
                    1 => {
                        let gp = self.gradient(p);
                        let gq = self.gradient(q);
                        ((gp[0] - gq[0]).powi(2) + (gp[1] - gq[1]).powi(2)).sqrt()
                    }
                    _ => {
                        let hp = self.hessian(p);
                        let hq = self.hessian(q);
                        if self.n == 2 {
                            (hp[0][0] - hq[0][0]).abs()
                        } else {
                            SymMatrix::from_lower(
                                2,
                                &[hp[0][0] - hq[0][0], hp[1][0] - hq[1][0], hp[1][1] - hq[1][1]],
                            )
                            .expect("finite entries")
                            .spectral_norm()
                        }
                    }
                };
                sup = sup.max(diff / dx.powf(alpha));
            }
        }
        Ok(sup)
    }

    /// Max of |psi| over the tangential cross-section grid; used to check the
    /// graph stays inside the domain band.
    pub fn sup_abs(&self, grid_pts: usize) -> f64 {
        let coords: Vec<f64> = (0..grid_pts)
            .map(|i| -1.0 + 2.0 * i as f64 / (grid_pts - 1) as f64)
            .collect();
        let mut sup: f64 = 0.0;
        if self.n == 2 {
            for &a in &coords {
                sup = sup.max(self.eval(&[a, 0.0, 0.0]).abs());
            }
        } else {
            for &a in &coords {
                for &b in &coords {
                    sup = sup.max(self.eval(&[a, b, 0.0]).abs());
                }
            }
        }
        sup
    }
}
