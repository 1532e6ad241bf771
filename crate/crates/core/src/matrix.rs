//! Small symmetric matrices (n = 2 or 3) with closed-form spectral data.
//!
//! Everything downstream (operator evaluation, ellipticity checks, Hessian
//! bookkeeping in regularity fits) works on 2x2 or 3x3 symmetric matrices, so
//! eigenvalues are computed by characteristic-polynomial formulas instead of
//! pulling in a linear-algebra crate.

use crate::error::CoreError;

/// Symmetric n x n matrix, n in {2, 3}. Entries are stored as a full dense
/// 3x3 array; for n = 2 the third row/column is zero and ignored.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct SymMatrix {
    n: usize,
    a: [[f64; 3]; 3],
}

impl SymMatrix {
    /// Builds a matrix from its lower-triangular entries, row by row:
    /// n = 2 expects `[a11, a21, a22]`, n = 3 expects
    /// `[a11, a21, a22, a31, a32, a33]`.
    pub fn from_lower(n: usize, lower: &[f64]) -> Result<Self, CoreError> {
        if n != 2 && n != 3 {
            return Err(CoreError::InvalidInput(format!(
                "matrix dimension must be 2 or 3, got {n}"
            )));
        }
        let want = n * (n + 1) / 2;
        if lower.len() != want {
            return Err(CoreError::InvalidInput(format!(
                "expected {want} lower-triangular entries for n={n}, got {}",
                lower.len()
            )));
        }
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput(
                "matrix entries must be finite".into(),
            ));
        }
        let mut a = [[0.0; 3]; 3];
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                a[i][j] = lower[k];
                a[j][i] = lower[k];
                k += 1;
            }
        }
        Ok(Self { n, a })
    }

    /// Builds a matrix from full rows, checking symmetry and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CoreError> {
        let n = rows.len();
        if n != 2 && n != 3 {
            return Err(CoreError::InvalidInput(format!(
                "matrix dimension must be 2 or 3, got {n}"
            )));
        }
        let mut a = [[0.0; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(CoreError::InvalidInput("matrix rows must be square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(CoreError::InvalidInput(
                        "matrix entries must be finite".into(),
                    ));
                }
                a[i][j] = v;
            }
        }
        for i in 0..n {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                    return Err(CoreError::InvalidInput(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
                let s = 0.5 * (a[i][j] + a[j][i]);
                a[i][j] = s;
                a[j][i] = s;
            }
        }
        Ok(Self { n, a })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, a: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(n: usize, d: &[f64]) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.a[i][i] = d[i];
        }
        m
    }

    /// Rank-one matrix v v^T.
    pub fn outer(n: usize, v: &[f64]) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = v[i] * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    /// Frobenius inner product tr(A B).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * other.a[j][i];
            }
        }
        s
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] += other.a[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] -= other.a[i][j];
            }
        }
        m
    }

    pub fn scale(&self, t: f64) -> SymMatrix {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= t;
            }
        }
        m
    }

    /// Quadratic form v^T A v (only the first n components of v are used).
    pub fn quad(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += v[i] * self.a[i][j] * v[j];
            }
        }
        s
    }

    /// Eigenvalues in ascending order (third slot is 0 for n = 2).
    ///
    /// n = 2: quadratic formula. n = 3: the trigonometric solution of the
    /// characteristic cubic for symmetric matrices.
    pub fn eigenvalues(&self) -> [f64; 3] {
        match self.n {
            2 => {
                let a = self.a[0][0];
                let b = self.a[0][1];
                let c = self.a[1][1];
                let mean = 0.5 * (a + c);
                let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                [mean - disc, mean + disc, 0.0]
            }
            3 => {
                let a = &self.a;
                let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
                if p1 == 0.0 {
                    let mut d = [a[0][0], a[1][1], a[2][2]];
                    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    return d;
                }
                let q = self.trace() / 3.0;
                let p2 = (a[0][0] - q).powi(2)
                    + (a[1][1] - q).powi(2)
                    + (a[2][2] - q).powi(2)
                    + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let mut b = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
                    }
                }
                let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
                    - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
                    + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
                let r = (detb / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let e_hi = q + 2.0 * p * phi.cos();
                let e_lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                let e_mid = 3.0 * q - e_hi - e_lo;
                [e_lo, e_mid, e_hi]
            }
            _ => unreachable!(),
        }
    }

    /// Spectral norm: max |eigenvalue|.
    pub fn spectral_norm(&self) -> f64 {
        let e = self.eigenvalues();
        e.iter().take(self.n).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> f64 {
        let e = self.eigenvalues();
        if self.n == 2 {
            e[1]
        } else {
            e[2]
        }
    }

    /// Sum of positive parts of the eigenvalues.
    pub fn eig_pos_sum(&self) -> f64 {
        let e = self.eigenvalues();
        e.iter().take(self.n).map(|v| v.max(0.0)).sum()
    }

    /// Sum of negative parts (as a nonnegative number).
    pub fn eig_neg_sum(&self) -> f64 {
        let e = self.eigenvalues();
        e.iter().take(self.n).map(|v| (-v).max(0.0)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_2x2() {
        let m = SymMatrix::from_lower(2, &[2.0, 1.0, 2.0]).unwrap();
        let e = m.eigenvalues();
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn eigenvalues_3x3_known() {
        // diag(1, 2, 3) rotated is hard to write down; use an exact case:
        // [[2,1,0],[1,2,0],[0,0,5]] has eigenvalues 1, 3, 5.
        let m =
            SymMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]])
                .unwrap();
        let e = m.eigenvalues();
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_3x3_match_characteristic_polynomial() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut lower = [0.0; 6];
            for v in lower.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let m = SymMatrix::from_lower(3, &lower).unwrap();
            for &lam in m.eigenvalues().iter() {
                // det(M - lam I) should vanish.
                let a = |i: usize, j: usize| m.get(i, j) - if i == j { lam } else { 0.0 };
                let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
                assert!(det.abs() < 1e-10, "det residual {det} for eigenvalue {lam}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn spectrum_matches_trace_and_charpoly(lower in proptest::array::uniform6(-5.0..5.0f64)) {
            let m = SymMatrix::from_lower(3, &lower).unwrap();
            let e = m.eigenvalues();
            let trace_gap = (e[0] + e[1] + e[2] - m.trace()).abs();
            proptest::prop_assert!(trace_gap < 1e-9 * (1.0 + m.trace().abs()));
            let scale = 1.0 + m.spectral_norm().powi(3);
            for lam in e {
                let a = |i: usize, j: usize| m.get(i, j) - if i == j { lam } else { 0.0 };
                let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
                proptest::prop_assert!(det.abs() < 1e-8 * scale, "det {det} at {lam}");
            }
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SymMatrix::from_lower(2, &[f64::NAN, 0.0, 1.0]).is_err());
        assert!(SymMatrix::from_lower(2, &[f64::INFINITY, 0.0, 1.0]).is_err());
    }

    #[test]
    fn spectral_norm_indefinite() {
        let m = SymMatrix::diag(2, &[3.0, -4.0]);
        assert_relative_eq!(m.spectral_norm(), 4.0);
    }
}
