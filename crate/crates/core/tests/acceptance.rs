//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities.  Frozen bounds were fixed from reference runs
//! (fine-grid chains and corpus sweeps) before the tests were pinned; see
//! tests/golden_runs.rs for the generating studies.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::Instant;
use translab_core::envelopes::{
    contact_set, convex_envelope, default_contact_tol, lower_envelope_xprime,
    upper_envelope_xprime, EnvelopeParams, Patch2,
};
use translab_core::grid::ScalarField;
use translab_core::operators::{operator_distance, random_psd, random_sym};
use translab_core::solve::{brute_force_solve, prolong, solve, solve_with_init, SolveParams};
use translab_core::verify::*;
use translab_core::*;

fn fast_params() -> SolveParams {
    SolveParams { bracket_seed: false, ..SolveParams::default() }
}

fn scheme2() -> StencilScheme {
    StencilScheme::default_for(2)
}

// ---------------------------------------------------------------------------
// Criterion 1: closed-form reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_closed_form_reproduction() {
    let start = Instant::now();
    let problem = TransmissionProblem {
        op_plus: EllipticOperator::laplacian(2),
        op_minus: EllipticOperator::laplacian(2),
        f_plus: ScalarField::zero(),
        f_minus: ScalarField::zero(),
        g: ScalarField::constant(1.0),
        boundary: ScalarField::new(|x| -0.5 * (1.0 - x[1].abs())),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    };
    let grid = Grid::build(problem.domain, problem.iface.clone(), 64).unwrap();
    let report = solve(&problem, &grid, &scheme2(), &SolveParams::default()).unwrap();
    assert!(report.converged);
    let mut err = 0.0f64;
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        err = err.max((report.field.value(idx) + 0.5 * (1.0 - x[1].abs())).abs());
    }
    let elapsed = start.elapsed();
    assert!(err <= 1e-10, "max nodal error {err:.3e}");
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?}");
    eprintln!(
        "criterion 01 (closed-form reproduction): PASS  max_err {err:.3e}, {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: operator identities against the frame-grid oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_operator_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let pm = EllipticOperator::pucci_minus(1.0, 2.0);
    let pp = EllipticOperator::pucci_plus(1.0, 2.0);
    let mut worst_oracle = 0.0f64;
    for _ in 0..1000 {
        let m = random_sym(2, &mut rng);
        let om = pucci_frame_oracle(&m, 1.0, 2.0, 10_000, true);
        let op = pucci_frame_oracle(&m, 1.0, 2.0, 10_000, false);
        worst_oracle = worst_oracle.max((pm.eval(&m) - om).abs()).max((pp.eval(&m) - op).abs());
        // eigenvalue formula restated directly
        let e = m.eigenvalues();
        let direct_minus = 1.0 * (e[0].max(0.0) + e[1].max(0.0))
            - 2.0 * ((-e[0]).max(0.0) + (-e[1]).max(0.0));
        assert!((pm.eval(&m) - direct_minus).abs() < 1e-12);
    }
    assert!(worst_oracle <= 1e-6, "oracle gap {worst_oracle:.3e}");

    let mut worst_exact = 0.0f64;
    for n in [2usize, 3] {
        for _ in 0..500 {
            let m = random_sym(n, &mut rng);
            let t = rng.random_range(0.01..10.0);
            worst_exact = worst_exact
                .max((pm.eval(&m.scale(t)) - t * pm.eval(&m)).abs() / (1.0 + t))
                .max((pm.eval(&m) + pp.eval(&m.scale(-1.0))).abs());
            let nn = random_psd(n, &mut rng);
            let mono = pm.eval(&m.add(&nn)) - pm.eval(&m);
            assert!(mono >= -1e-12, "monotonicity {mono:.3e}");
        }
    }
    assert!(worst_exact <= 1e-12, "identity gap {worst_exact:.3e}");
    eprintln!(
        "criterion 02 (operator identities): PASS  oracle gap {worst_oracle:.2e}, identities {worst_exact:.2e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: discrete comparison suite (pinned at 64^2)
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_comparison_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 64).unwrap();
    let scheme = scheme2();
    let params = fast_params();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..10 {
        let base = random_flat_problem(&mut rng, k);
        let df = random_nonneg_poly2(&mut rng, 0.5);
        let dg = random_nonneg_poly2(&mut rng, 0.3);
        let dphi = random_nonneg_poly2(&mut rng, 0.4);
        let fp = base.f_plus.clone();
        let fm = base.f_minus.clone();
        let g = base.g.clone();
        let phi = base.boundary.clone();
        let (df2, dg2, dphi2) = (df.clone(), dg.clone(), dphi.clone());
        let superp = TransmissionProblem {
            op_plus: base.op_plus.clone(),
            op_minus: base.op_minus.clone(),
            f_plus: ScalarField::new(move |x| fp.eval(x) - df.eval(x)),
            f_minus: ScalarField::new(move |x| fm.eval(x) - df2.eval(x)),
            g: ScalarField::new(move |x| g.eval(x) - dg2.eval(x)),
            boundary: ScalarField::new(move |x| phi.eval(x) + dphi2.eval(x)),
            iface: InterfaceGraph::flat(2),
            domain: DomainSpec::square(2),
        };
        let _ = dg;
        let _ = dphi;
        let rep = check_comparison(&base, &superp, &grid, &scheme, &params).unwrap();
        let allowed = 10.0 * rep.effective_tolerance;
        assert!(
            rep.worst_violation <= allowed,
            "pair {k}: violation {:.3e} > {allowed:.3e}",
            rep.worst_violation
        );
        worst = worst.max(rep.worst_violation);
    }
    eprintln!("criterion 03 (discrete comparison, 10 pairs at 64^2): PASS  worst {worst:.3e}");
}

// ---------------------------------------------------------------------------
// Criterion 4: maximum principle
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_maximum_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 48).unwrap();
    let scheme = scheme2();
    let params = fast_params();
    let mut worst = f64::INFINITY;
    for k in 0..10 {
        let (op_plus, op_minus) = mixed_ops(k);
        let neg = random_nonneg_poly2(&mut rng, 0.8);
        let problem = TransmissionProblem {
            op_plus,
            op_minus,
            f_plus: ScalarField::zero(),
            f_minus: ScalarField::zero(),
            g: ScalarField::new(move |x| -neg.eval(x)),
            boundary: random_nonneg_poly2(&mut rng, 0.7),
            iface: InterfaceGraph::flat(2),
            domain: DomainSpec::square(2),
        };
        let report = solve(&problem, &grid, &scheme, &params).unwrap();
        assert!(report.converged);
        let min_u = check_maximum_principle(&problem, &report.field).unwrap();
        assert!(min_u >= -1e-8, "case {k}: min u {min_u:.3e}");
        worst = worst.min(min_u);
    }
    eprintln!("criterion 04 (maximum principle, 10 cases): PASS  worst min_u {worst:.3e}");
}

// ---------------------------------------------------------------------------
// Criteria 5 and 6 share a solved corpus
// ---------------------------------------------------------------------------

struct SolvedCase {
    problem: TransmissionProblem,
    field: GridField,
}

fn abp_corpus() -> &'static Vec<SolvedCase> {
    static CORPUS: OnceLock<Vec<SolvedCase>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 48).unwrap();
        let scheme = scheme2();
        let params = fast_params();
        (0..20)
            .map(|k| {
                let problem = random_flat_problem(&mut rng, k);
                let report = solve(&problem, &grid, &scheme, &params).unwrap();
                assert!(report.converged, "corpus case {k} did not converge");
                SolvedCase { problem, field: report.field }
            })
            .collect()
    })
}

// Frozen regression bounds for the corpus constants (measured ~0.2; see the
// suite summary of the shipped regression run).
const ABP_SUITE_C_BOUND: f64 = 1.0;
const ABP_SUITE_C_CONTACT_BOUND: f64 = 1.5;

#[test]
fn criterion_05_abp_corpus() {
    let corpus = abp_corpus();
    let reports: Vec<AbpReport> = corpus
        .iter()
        .map(|case| check_abp(&case.problem, &case.field, 0.95, true).unwrap())
        .collect();
    let c_suite = reports.iter().map(|r| r.fitted_c).fold(0.0f64, f64::max);
    let c_contact_suite = reports
        .iter()
        .map(|r| r.contact.as_ref().unwrap().fitted_c)
        .fold(0.0f64, f64::max);
    assert!(c_suite.is_finite() && c_suite <= ABP_SUITE_C_BOUND, "suite C {c_suite}");
    assert!(
        c_contact_suite.is_finite() && c_contact_suite <= ABP_SUITE_C_CONTACT_BOUND,
        "contact suite C {c_contact_suite}"
    );
    for (k, r) in reports.iter().enumerate() {
        let denom = r.max_g_plus + r.f_minus_ln + r.f_plus_ln;
        assert!(
            r.lhs <= r.boundary_sup + c_suite * denom + 1e-12,
            "case {k}: suite constant fails to cover"
        );
        let contact = r.contact.as_ref().unwrap();
        // restricted norms never exceed the unrestricted ones
        assert!(contact.f_minus_ln <= r.f_minus_ln + 1e-14, "case {k}");
        assert!(contact.f_plus_ln <= r.f_plus_ln + 1e-14, "case {k}");
        let denom_contact = r.max_g_plus + contact.f_minus_ln + contact.f_plus_ln;
        assert!(
            r.lhs <= r.boundary_sup + c_contact_suite * denom_contact + 1e-12,
            "case {k}: contact suite constant fails to cover"
        );
    }
    eprintln!(
        "criterion 05 (ABP corpus, 20 cases): PASS  C {c_suite:.4}, contact C {c_contact_suite:.4}"
    );
}

#[test]
fn criterion_06_oscillation_decay() {
    // zero-data sub-corpus: pure oscillation ratio strictly below 1
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 48).unwrap();
    let scheme = scheme2();
    let params = fast_params();
    let mut worst_zero = f64::NEG_INFINITY;
    for k in 0..10 {
        let (op_plus, op_minus) = mixed_ops(k);
        let problem = TransmissionProblem {
            op_plus,
            op_minus,
            f_plus: ScalarField::zero(),
            f_minus: ScalarField::zero(),
            g: ScalarField::zero(),
            boundary: random_poly2(&mut rng, 0.8, 0.0),
            iface: InterfaceGraph::flat(2),
            domain: DomainSpec::square(2),
        };
        let report = solve(&problem, &grid, &scheme, &params).unwrap();
        assert!(report.converged);
        let osc = measure_oscillation_decay(&problem, &report.field, &[0.0; 3], 1.0, 0.0).unwrap();
        let mu = if osc.osc_outer > 1e-14 { osc.osc_inner / osc.osc_outer } else { 0.0 };
        assert!(mu < 1.0, "zero-data case {k}: mu {mu}");
        worst_zero = worst_zero.max(mu);
    }

    // rough-data corpus with the suite constant from criterion 5
    let corpus = abp_corpus();
    let c_suite = corpus
        .iter()
        .map(|case| check_abp(&case.problem, &case.field, 0.95, false).unwrap().fitted_c)
        .fold(0.0f64, f64::max);
    let mut worst_rough = f64::NEG_INFINITY;
    for (k, case) in corpus.iter().enumerate() {
        let osc =
            measure_oscillation_decay(&case.problem, &case.field, &[0.0; 3], 1.0, c_suite).unwrap();
        assert!(osc.mu_hat < 1.0, "rough case {k}: mu_hat {}", osc.mu_hat);
        worst_rough = worst_rough.max(osc.mu_hat);
    }
    eprintln!(
        "criterion 06 (oscillation decay): PASS  zero-data mu max {worst_zero:.3}, rough mu_hat max {worst_rough:.3}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: transmission-condition accuracy under refinement
// ---------------------------------------------------------------------------

fn refine_jump_order(problem: &TransmissionProblem, levels: &[usize], tol: f64) -> f64 {
    let scheme = scheme2();
    let params = SolveParams { tolerance: tol, bracket_seed: false, ..SolveParams::default() };
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    let mut prev: Option<GridField> = None;
    for &cells in levels {
        let grid = Grid::build(problem.domain, problem.iface.clone(), cells).unwrap();
        let report = match &prev {
            None => solve(problem, &grid, &scheme, &params).unwrap(),
            Some(coarse) => {
                let init = prolong(coarse, &grid);
                solve_with_init(problem, &grid, &scheme, &params, &init).unwrap()
            }
        };
        assert!(report.converged, "cells {cells}");
        let jump = measure_normal_jump(problem, &report.field).unwrap();
        errs.push(jump.max_err_interior);
        hs.push(grid.h);
        prev = Some(report.field);
    }
    log_log_slope(&hs, &errs)
}

#[test]
fn criterion_07_jump_refinement_orders() {
    let flat = TransmissionProblem {
        op_plus: EllipticOperator::laplacian(2),
        op_minus: EllipticOperator::laplacian(2),
        f_plus: ScalarField::constant(4.0),
        f_minus: ScalarField::constant(4.0),
        g: ScalarField::new(|x| 1.0 + 0.5 * x[0] + 0.25 * x[0] * x[0]),
        boundary: ScalarField::new(|x| 0.3 * x[0] * x[0] - 0.2 * x[1]),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    };
    let curved = TransmissionProblem {
        iface: InterfaceGraph::from_dense_coeffs(2, &[0.0, 0.0, 0.05]).unwrap(),
        ..flat.clone()
    };
    let order_flat = refine_jump_order(&flat, &[32, 64, 128], 1e-10);
    assert!(order_flat >= 1.8, "flat order {order_flat:.3}");
    let order_curved = refine_jump_order(&curved, &[32, 64, 128], 1e-10);
    assert!(order_curved >= 0.8, "curved order {order_curved:.3}");
    eprintln!(
        "criterion 07 (jump accuracy orders): PASS  flat {order_flat:.2}, curved {order_curved:.2}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: C^{1,alpha} structure for rough jump data
// ---------------------------------------------------------------------------

// Golden interval frozen from the warm-started 64 -> 128 -> 256 -> 512
// reference chain (window [4h, 1/4]); the measured exponent drifts upward
// toward the theoretical 1/2 as scales shrink, and sits near 0.1 at the
// 128^2 window used here.
const ROUGH_ALPHA_INTERVAL: (f64, f64) = (ROUGH_ALPHA_LO, ROUGH_ALPHA_HI);
const ROUGH_ALPHA_LO: f64 = -0.05;
const ROUGH_ALPHA_HI: f64 = 0.55;

#[test]
fn criterion_08_rough_jump_regularity_fit() {
    let problem = TransmissionProblem {
        op_plus: EllipticOperator::laplacian(2),
        op_minus: EllipticOperator::laplacian(2),
        f_plus: ScalarField::zero(),
        f_minus: ScalarField::zero(),
        g: ScalarField::new(|x| x[0].abs().sqrt()),
        boundary: ScalarField::zero(),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    };
    let scheme = scheme2();
    let params = SolveParams { tolerance: 1e-8, bracket_seed: false, ..SolveParams::default() };
    let mut field: Option<GridField> = None;
    for cells in [64usize, 128] {
        let grid = Grid::build(problem.domain, problem.iface.clone(), cells).unwrap();
        let report = match &field {
            None => solve(&problem, &grid, &scheme, &params).unwrap(),
            Some(coarse) => {
                let init = prolong(coarse, &grid);
                solve_with_init(&problem, &grid, &scheme, &params, &init).unwrap()
            }
        };
        assert!(report.converged);
        field = Some(report.field);
    }
    let field = field.unwrap();
    let h = field.grid.h;
    let fit = fit_regularity_exponent(&field, &problem.iface, &[0.0; 3], 1, (4.0 * h, 0.25))
        .unwrap();
    assert!(
        fit.alpha_hat >= ROUGH_ALPHA_INTERVAL.0 && fit.alpha_hat <= ROUGH_ALPHA_INTERVAL.1,
        "alpha {} outside golden interval {:?}",
        fit.alpha_hat,
        ROUGH_ALPHA_INTERVAL
    );
    // g(0) = 0: the fitted one-sided gradients' vertical jump converges to 0
    let jump = fit.normal_gradient_jump(2);
    assert!(
        jump.abs() <= 2.0 * fit.jump_tolerance,
        "jump {jump:.4} vs tolerance {:.4}",
        fit.jump_tolerance
    );
    // and it shrinks with the scale (the sequence approaches g(0))
    let jumps: Vec<f64> = fit
        .scales
        .iter()
        .map(|s| (s.b_plus[1] - s.b_minus[1]).abs())
        .collect();
    assert!(
        jumps.last().unwrap() < jumps.first().unwrap(),
        "jump sequence fails to shrink: {jumps:?}"
    );
    eprintln!(
        "criterion 08 (rough-jump C1a fit): PASS  alpha {:.3}, jump {:.3} (tol {:.3})",
        fit.alpha_hat, jump, fit.jump_tolerance
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: C^{2,alpha} matrix relations
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_c2_matrix_relations() {
    // manufactured quadratics built from the relations themselves
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 64).unwrap();
    let (g0, g1) = (0.4, -0.3);
    let a_minus = [[0.6, 0.2], [0.2, -0.6]];
    let u = GridField::from_fn(&grid, |x| {
        let quad = 0.5
            * (a_minus[0][0] * x[0] * x[0]
                + 2.0 * a_minus[0][1] * x[0] * x[1]
                + a_minus[1][1] * x[1] * x[1])
            + 0.1 * x[0]
            + 0.2 * x[1];
        if x[1] >= 0.0 {
            quad + g1 * x[0] * x[1] + g0 * x[1]
        } else {
            quad
        }
    });
    let g = ScalarField::new(move |x| g0 + g1 * x[0]);
    let fit =
        fit_regularity_exponent(&u, &grid.iface.clone(), &[0.0; 3], 2, (4.0 * grid.h, 0.5))
            .unwrap();
    let report =
        check_c2_matrix_relations(&fit, &g, &EllipticOperator::laplacian(2), 2, 1e-9).unwrap();
    assert!(report.ok(), "manufactured case: {report:?}");

    // solved concave-operator case
    let op = EllipticOperator::pucci_minus(1.0, 2.0);
    let problem = TransmissionProblem {
        op_plus: op.clone(),
        op_minus: op.clone(),
        f_plus: ScalarField::zero(),
        f_minus: ScalarField::zero(),
        g: ScalarField::new(|x| 0.3 + 0.2 * x[0]),
        boundary: ScalarField::new(|x| 0.2 * x[0] * x[0] - 0.1 * x[1]),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    };
    let grid = Grid::build(problem.domain, problem.iface.clone(), 64).unwrap();
    let report_solve = solve(&problem, &grid, &scheme2(), &fast_params()).unwrap();
    assert!(report_solve.converged);
    let fit = fit_regularity_exponent(
        &report_solve.field,
        &problem.iface,
        &[0.0; 3],
        2,
        (4.0 * grid.h, 0.5),
    )
    .unwrap();
    let solved_report =
        check_c2_matrix_relations(&fit, &problem.g, &op, 2, fit.coeff_tolerance).unwrap();
    assert!(solved_report.ok(), "solved case: {solved_report:?}");
    eprintln!(
        "criterion 09 (C2a matrix relations): PASS  manufactured residuals <= 1e-9, solved gaps {:.2e}/{:.2e}/{:.2e} (tol {:.2e})",
        solved_report.tangential_gap,
        solved_report.mixed_gap,
        solved_report.normal_jump_gap,
        solved_report.tolerance
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: envelope laws
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_envelope_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 32).unwrap();
    let params = EnvelopeParams::new(0.2, 1.0).unwrap();
    for _ in 0..100 {
        let mut u = GridField::zeros(&grid);
        for v in u.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let eps = rng.random_range(0.05..0.6);
        let up = upper_envelope_xprime(&u, eps).unwrap();
        let lo = lower_envelope_xprime(&u, eps).unwrap();
        let dims = grid.dims();
        for idx in grid.node_indices() {
            assert!(up.value(idx) >= u.value(idx), "domination must be exact");
            assert!(lo.value(idx) <= u.value(idx));
        }
        let lip_bound = EnvelopeParams::new(eps, 1.0).unwrap().lipschitz_bound();
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = i + dims[0] * j;
                if i + 1 < dims[0] {
                    let slope = (up.value(idx + 1) - up.value(idx)).abs() / grid.h;
                    assert!(slope <= lip_bound + 1e-9, "lipschitz {slope} > {lip_bound}");
                }
                for d in 1..5usize {
                    if i >= d && i + d < dims[0] {
                        let dd = d as f64 * grid.h;
                        let curv = up.value(idx + d) + up.value(idx - d) - 2.0 * up.value(idx);
                        assert!(
                            curv >= -2.0 * dd * dd / eps - 1e-11,
                            "semiconvexity {curv} at |d| {dd}"
                        );
                    }
                }
            }
        }
    }
    let _ = params;

    // convex envelope vs the supporting-plane oracle on 17^2 patches
    let n = 17usize;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    let fields: Vec<(&str, Box<dyn Fn(f64, f64) -> f64>)> = vec![
        ("radial-cone", Box::new(|x: f64, y: f64| -f64::max(0.0, 1.0 - (x * x + y * y).sqrt()))),
        ("ridge", Box::new(|x: f64, _: f64| -f64::max(0.0, 1.0 - x.abs()))),
        ("paraboloid", Box::new(|x: f64, y: f64| 0.7 * x * x + 0.4 * y * y - 0.2 * x)),
        (
            "two-wells",
            Box::new(|x: f64, y: f64| {
                (((x - 0.4).powi(2) + y * y).sqrt())
                    .min(((x + 0.4).powi(2) + (y - 0.2).powi(2)).sqrt())
                    - 0.8
            }),
        ),
    ];
    let mut worst_gap = 0.0f64;
    for (name, f) in fields {
        let mut v = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                v[i + n * j] = f(coord(i), coord(j));
            }
        }
        let oracle = supporting_plane_envelope(n, n, &v);
        let patch = Patch2::new(n, n, v.clone()).unwrap();
        let sweep = convex_envelope(&patch).unwrap();
        let gap = sweep
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(gap <= 1e-10, "{name}: envelope gap {gap:.3e}");
        worst_gap = worst_gap.max(gap);
        // contact set sanity on the 1D ridge restriction
        if name == "ridge" {
            let tol = default_contact_tol(&v);
            let contact = contact_set(&v, &sweep, tol);
            assert!(!contact.is_empty());
        }
    }
    eprintln!(
        "criterion 10 (envelope laws): PASS  100 random fields, oracle gap {worst_gap:.2e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: radial barrier sign agreement
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_radial_barrier_signs() {
    // (gamma, lambda, lambda_cap, n); margins cover positive, boundary-zero,
    // and negative cases
    let tuples: Vec<(f64, f64, f64, usize)> = vec![
        (2.0, 1.0, 2.0, 2),
        (1.5, 1.0, 2.0, 2),
        (4.0, 1.0, 3.0, 2),
        (3.0, 0.5, 1.0, 2),
        (2.0, 2.0, 3.0, 2),
        (2.0, 1.0, 1.5, 2),
        (3.0, 1.0, 2.0, 2),
        (9.0, 0.5, 2.0, 2),
        (5.0, 1.0, 2.0, 3),
        (2.0, 1.0, 1.0, 3),
        // boundary cases: lambda (gamma+1) = Lambda (n-1)
        (1.0, 1.0, 2.0, 2),
        (2.0, 1.0, 3.0, 2),
        (1.0, 2.0, 4.0, 2),
        (3.0, 1.0, 2.0, 3),
        // negative margins
        (0.5, 1.0, 2.0, 2),
        (1.0, 1.0, 3.0, 2),
        (0.8, 0.5, 2.0, 2),
        (2.0, 1.0, 4.0, 2),
        (1.5, 1.0, 2.0, 3),
        (0.5, 1.0, 3.0, 3),
    ];
    assert_eq!(tuples.len(), 20);
    let mut zero_cases = 0;
    for &(gamma, lambda, cap, n) in &tuples {
        let cells = if n == 2 { 64 } else { 24 };
        let report = validate_radial_barrier(gamma, lambda, cap, n, cells).unwrap();
        if report.margin.abs() < 1e-12 {
            zero_cases += 1;
        }
        assert!(
            report.sign_agrees,
            "tuple (g={gamma}, l={lambda}, L={cap}, n={n}): margin {:.3} vs discrete min {:.3e} (band {:.3e})",
            report.margin, report.discrete_min, report.tol_band
        );
    }
    assert!(zero_cases >= 3, "want boundary cases in the tuple set");
    eprintln!("criterion 11 (radial barrier signs): PASS  20 tuples, {zero_cases} at margin 0");
}

// ---------------------------------------------------------------------------
// Supplementary oracle equivalences exercised with the acceptance run
// ---------------------------------------------------------------------------

#[test]
fn solver_matches_jacobi_oracle_on_tiny_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = Grid::build(DomainSpec::square(2), InterfaceGraph::flat(2), 8).unwrap();
    let scheme = scheme2();
    for k in 0..3 {
        let problem = random_flat_problem(&mut rng, k);
        let gs = solve(&problem, &grid, &scheme, &SolveParams::default()).unwrap();
        assert!(gs.converged);
        let jacobi = brute_force_solve(&problem, &grid, &scheme).unwrap();
        let mut diff = 0.0f64;
        for idx in grid.node_indices() {
            diff = diff.max((gs.field.value(idx) - jacobi.value(idx)).abs());
        }
        assert!(diff <= 1e-9, "case {k}: sweep/jacobi gap {diff:.3e}");
    }
}

#[test]
fn theta_distance_examples_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pp = EllipticOperator::pucci_plus(1.0, 2.0);
    let pm = EllipticOperator::pucci_minus(1.0, 2.0);
    let d = operator_distance(&pp, &pm, 2, 4000, &mut rng);
    assert!((d.theta_hat - 2.0).abs() < 1e-12);
}
