//! Uniformly elliptic operators: linear tr(A M), the Pucci extremal pair,
//! Bellman minima of linear operators, and the two-sided blend used for
//! stability experiments near an interface.
//!
//! All operators act on [`SymMatrix`] Hessians and share an ellipticity pair
//! (lambda, lambda_cap). `lambda_cap` is the upper constant (the capital
//! Lambda of the class E(lambda, Lambda)).  Every operation here is a pure
//! function of its inputs and safe to call concurrently.

use crate::error::CoreError;
use crate::geometry::InterfaceGraph;
use crate::matrix::SymMatrix;
use rand::Rng;
use serde::Serialize;

/// Smooth cutoff used by [`OperatorKind::Blend`]: 0 below the interface band,
/// 1 above it, cubic smoothstep across a band of half-width `eps`.
#[derive(Clone, Debug)]
pub struct BlendWeight {
    pub iface: InterfaceGraph,
    pub eps: f64,
}

impl BlendWeight {
    pub fn weight(&self, x: &[f64; 3]) -> f64 {
        let s = x[self.iface.dim() - 1] - self.iface.eval(x);
        let t = s / self.eps;
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            let u = 0.5 * (t + 1.0);
            u * u * (3.0 - 2.0 * u)
        }
    }
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    /// F(M) = tr(A M) with spec(A) inside [lambda, lambda_cap].
    Linear(SymMatrix),
    /// Maximal Pucci operator: lambda_cap * sum e_i^+ - lambda * sum e_i^-.
    PucciPlus,
    /// Minimal Pucci operator: lambda * sum e_i^+ - lambda_cap * sum e_i^-.
    PucciMinus,
    /// Minimum over a family of linear operators (concave).
    BellmanMin(Vec<SymMatrix>),
    /// x-dependent blend h(x) F_plus(M) + (1 - h(x)) F_minus(M).
    Blend {
        plus: Box<EllipticOperator>,
        minus: Box<EllipticOperator>,
        weight: BlendWeight,
    },
}

#[derive(Clone, Debug)]
pub struct EllipticOperator {
    pub kind: OperatorKind,
    pub lambda: f64,
    pub lambda_cap: f64,
}

impl EllipticOperator {
    pub fn new(kind: OperatorKind, lambda: f64, lambda_cap: f64) -> Result<Self, CoreError> {
        if !(lambda > 0.0 && lambda_cap >= lambda) {
            return Err(CoreError::InvalidInput(format!(
                "ellipticity constants must satisfy 0 < lambda <= lambda_cap, got ({lambda}, {lambda_cap})"
            )));
        }
        match &kind {
            OperatorKind::Linear(a) => check_spectrum(a, lambda, lambda_cap)?,
            OperatorKind::BellmanMin(members) => {
                if members.is_empty() {
                    return Err(CoreError::InvalidInput(
                        "bellman_min needs at least one member".into(),
                    ));
                }
                for a in members {
                    check_spectrum(a, lambda, lambda_cap)?;
                }
            }
            OperatorKind::Blend { plus, minus, weight } => {
                if !(weight.eps > 0.0) {
                    return Err(CoreError::InvalidInput("blend width must be > 0".into()));
                }
                for sub in [plus.as_ref(), minus.as_ref()] {
                    if (sub.lambda - lambda).abs() > 1e-12 || (sub.lambda_cap - lambda_cap).abs() > 1e-12
                    {
                        return Err(CoreError::InvalidInput(
                            "blend members must share the ellipticity pair".into(),
                        ));
                    }
                    if matches!(sub.kind, OperatorKind::Blend { .. }) {
                        return Err(CoreError::InvalidInput("nested blends are not supported".into()));
                    }
                }
            }
            _ => {}
        }
        Ok(Self { kind, lambda, lambda_cap })
    }

    pub fn pucci_minus(lambda: f64, lambda_cap: f64) -> Self {
        Self::new(OperatorKind::PucciMinus, lambda, lambda_cap).expect("valid constants")
    }

    pub fn pucci_plus(lambda: f64, lambda_cap: f64) -> Self {
        Self::new(OperatorKind::PucciPlus, lambda, lambda_cap).expect("valid constants")
    }

    pub fn linear(a: SymMatrix, lambda: f64, lambda_cap: f64) -> Result<Self, CoreError> {
        Self::new(OperatorKind::Linear(a), lambda, lambda_cap)
    }

    /// Laplacian as the degenerate Pucci pair lambda = lambda_cap = 1.
    pub fn laplacian(n: usize) -> Self {
        Self::linear(SymMatrix::identity(n), 1.0, 1.0).expect("identity is admissible")
    }

    /// Evaluates the operator on a Hessian. Blend weights are taken at `x`;
    /// every other kind ignores the point.
    pub fn eval_at(&self, x: &[f64; 3], m: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::Linear(a) => a.inner(m),
            OperatorKind::PucciPlus => {
                self.lambda_cap * m.eig_pos_sum() - self.lambda * m.eig_neg_sum()
            }
            OperatorKind::PucciMinus => {
                self.lambda * m.eig_pos_sum() - self.lambda_cap * m.eig_neg_sum()
            }
            OperatorKind::BellmanMin(members) => members
                .iter()
                .map(|a| a.inner(m))
                .fold(f64::INFINITY, f64::min),
            OperatorKind::Blend { plus, minus, weight } => {
                let h = weight.weight(x);
                h * plus.eval_at(x, m) + (1.0 - h) * minus.eval_at(x, m)
            }
        }
    }

    /// Point-free evaluation; blends are evaluated with their weight at the
    /// origin.
    pub fn eval(&self, m: &SymMatrix) -> f64 {
        self.eval_at(&[0.0; 3], m)
    }

    /// True for kinds that are concave in M (needed by the C^{2,alpha}
    /// experiments).
    pub fn is_concave(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::Linear(_) | OperatorKind::PucciMinus | OperatorKind::BellmanMin(_)
        )
    }
}

fn check_spectrum(a: &SymMatrix, lambda: f64, lambda_cap: f64) -> Result<(), CoreError> {
    let tol = 1e-10 * (1.0 + lambda_cap);
    let lo = a.min_eigenvalue();
    let hi = a.max_eigenvalue();
    if lo < lambda - tol || hi > lambda_cap + tol {
        return Err(CoreError::InvalidInput(format!(
            "linear coefficient spectrum [{lo:.6}, {hi:.6}] leaves [{lambda}, {lambda_cap}]"
        )));
    }
    Ok(())
}

/// One sampled violation of the ellipticity sandwich.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityViolation {
    pub gap: f64,
    pub side: &'static str,
}

/// Report of [`check_uniform_ellipticity`].
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub trials: usize,
    pub violations: Vec<EllipticityViolation>,
    pub worst_gap: f64,
}

impl EllipticityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Deterministic probe matrices: identity, rank-one spikes, an indefinite
/// matrix.  Always included so the documented counterexamples are found
/// independently of the seed.
pub fn probe_matrices(n: usize) -> Vec<SymMatrix> {
    let mut v = vec![
        SymMatrix::identity(n),
        SymMatrix::outer(n, &[1.0, 0.0, 0.0]),
        SymMatrix::outer(n, &[0.0, 1.0, 0.0]),
        SymMatrix::outer(n, &[std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0]),
        SymMatrix::diag(n, &[1.0, -1.0, 1.0]),
    ];
    if n == 3 {
        v.push(SymMatrix::outer(n, &[0.0, 0.0, 1.0]));
        v.push(SymMatrix::diag(n, &[1.0, 1.0, -1.0]));
    }
    v
}

pub fn random_sym(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let mut m = SymMatrix::zero(n);
    for i in 0..n {
        for j in 0..=i {
            m.set_sym(i, j, rng.random_range(-1.0..1.0));
        }
    }
    m
}

/// Random positive semidefinite matrix R^T R.
pub fn random_psd(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let mut r = [[0.0; 3]; 3];
    for row in r.iter_mut().take(n) {
        for v in row.iter_mut().take(n) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let mut m = SymMatrix::zero(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for (_, rk) in r.iter().enumerate().take(n) {
                s += rk[i] * rk[j];
            }
            m.set_sym(i, j, s);
        }
    }
    m
}

/// Audits degenerate ellipticity by sampling.
///
/// The class E(lambda, Lambda) is characterized by the Pucci sandwich
/// M^-(N) <= F(M+N) - F(M) <= M^+(N) for arbitrary symmetric N; for N >= 0
/// this contains the two-sided bound lambda*tr(N) <= F(M+N) - F(M) <=
/// Lambda*tr(N).  The sandwich form is the one under which the Pucci
/// operators themselves are extremal members, so that is what gets checked:
/// random (M, N) pairs plus a deterministic probe corpus, with `n` drawn both
/// signed and positive semidefinite.
pub fn check_uniform_ellipticity(
    op: &EllipticOperator,
    n: usize,
    trials: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> EllipticityReport {
    let pm = EllipticOperator::pucci_minus(op.lambda, op.lambda_cap);
    let pp = EllipticOperator::pucci_plus(op.lambda, op.lambda_cap);
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;

    let mut check_pair = |m: &SymMatrix, nn: &SymMatrix| {
        let diff = op.eval(&m.add(nn)) - op.eval(m);
        let lo = pm.eval(nn);
        let hi = pp.eval(nn);
        if diff < lo - tol {
            violations.push(EllipticityViolation { gap: lo - diff, side: "lower" });
        }
        if diff > hi + tol {
            violations.push(EllipticityViolation { gap: diff - hi, side: "upper" });
        }
        worst = worst.max(lo - diff).max(diff - hi);
    };

    let probes = probe_matrices(n);
    for m in &probes {
        for nn in &probes {
            check_pair(m, nn);
        }
    }
    for _ in 0..trials {
        let m = random_sym(n, rng);
        let psd = random_psd(n, rng);
        check_pair(&m, &psd);
        let signed = random_sym(n, rng);
        check_pair(&m, &signed);
    }
    EllipticityReport { trials, violations, worst_gap: worst }
}

/// Empirical closeness of two operators: max over sampled M != 0 of
/// |F_plus(M) - F_minus(M)| / ||M||, spectral norm.  A lower bound on the
/// true supremum; the deterministic probes keep the headline values
/// seed-independent.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorDistance {
    pub theta_hat: f64,
    pub samples_used: usize,
    /// Matrix norm used in the denominator (always "spectral" here; recorded
    /// because the closeness constant depends on this convention).
    pub norm: &'static str,
}

pub fn operator_distance(
    f_plus: &EllipticOperator,
    f_minus: &EllipticOperator,
    n: usize,
    trials: usize,
    rng: &mut impl Rng,
) -> OperatorDistance {
    let mut theta: f64 = 0.0;
    let mut used = 0;
    let mut consider = |m: &SymMatrix| {
        let norm = m.spectral_norm();
        if norm > 1e-14 {
            let ratio = (f_plus.eval(m) - f_minus.eval(m)).abs() / norm;
            theta = theta.max(ratio);
            used += 1;
        }
    };
    for m in probe_matrices(n) {
        consider(&m);
    }
    for _ in 0..trials {
        consider(&random_sym(n, rng));
    }
    OperatorDistance { theta_hat: theta, samples_used: used, norm: "spectral" }
}
