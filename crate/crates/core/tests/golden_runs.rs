// Long-running reference computations used to freeze golden intervals before
// the acceptance suite is pinned.  Run explicitly:
//
//   cargo test -p translab-core --test golden_runs -- --ignored --nocapture
//
// The printed numbers inform the frozen constants in tests/acceptance.rs.
use std::time::Instant;
use translab_core::grid::ScalarField;
use translab_core::solve::{prolong, solve, solve_with_init, SolveParams};
use translab_core::verify::{fit_regularity_exponent, measure_normal_jump};
use translab_core::*;

fn params(tol: f64) -> SolveParams {
    SolveParams { tolerance: tol, max_sweeps: 3_000_000, bracket_seed: false, ..SolveParams::default() }
}

fn rough_g_problem() -> TransmissionProblem {
    TransmissionProblem {
        op_plus: EllipticOperator::laplacian(2),
        op_minus: EllipticOperator::laplacian(2),
        f_plus: ScalarField::zero(),
        f_minus: ScalarField::zero(),
        g: ScalarField::new(|x| x[0].abs().sqrt()),
        boundary: ScalarField::zero(),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    }
}

#[test]
#[ignore]
fn rough_jump_reference_chain() {
    let problem = rough_g_problem();
    let scheme = StencilScheme::default_for(2);
    let mut prev: Option<GridField> = None;
    for cells in [64usize, 128, 256, 512] {
        let grid = Grid::build(problem.domain, problem.iface.clone(), cells).unwrap();
        let t = Instant::now();
        let p = params(1e-8);
        let report = match &prev {
            None => solve(&problem, &grid, &scheme, &p).unwrap(),
            Some(coarse) => {
                let init = prolong(coarse, &grid);
                solve_with_init(&problem, &grid, &scheme, &p, &init).unwrap()
            }
        };
        assert!(report.converged, "cells {cells} did not converge");
        let h = grid.h;
        let windows = [
            ("w8h-half", (8.0 * h, 0.5)),
            ("w4h-quarter", ((4.0 * h).max(0.03), 0.25)),
        ];
        for (name, window) in windows {
            match fit_regularity_exponent(&report.field, &problem.iface, &[0.0; 3], 1, window) {
                Ok(fit) => {
                    eprintln!(
                        "cells {cells} {name}: alpha={:.4} r2={:.5} jump={:.5} jump_tol={:.5} oscs={:?} ({} sweeps, {:?})",
                        fit.alpha_hat,
                        fit.fit_r2,
                        fit.normal_gradient_jump(2),
                        fit.jump_tolerance,
                        fit.scales.iter().map(|s| s.residual_osc).collect::<Vec<_>>(),
                        report.sweeps,
                        t.elapsed()
                    );
                }
                Err(e) => eprintln!("cells {cells} {name}: fit failed: {e}"),
            }
        }
        prev = Some(report.field);
    }
}

fn smooth_flat_problem() -> TransmissionProblem {
    TransmissionProblem {
        op_plus: EllipticOperator::laplacian(2),
        op_minus: EllipticOperator::laplacian(2),
        f_plus: ScalarField::constant(4.0),
        f_minus: ScalarField::constant(4.0),
        g: ScalarField::new(|x| 1.0 + 0.5 * x[0] + 0.25 * x[0] * x[0]),
        boundary: ScalarField::new(|x| 0.3 * x[0] * x[0] - 0.2 * x[1]),
        iface: InterfaceGraph::flat(2),
        domain: DomainSpec::square(2),
    }
}

fn smooth_curved_problem() -> TransmissionProblem {
    TransmissionProblem {
        iface: InterfaceGraph::from_dense_coeffs(2, &[0.0, 0.0, 0.05]).unwrap(),
        ..smooth_flat_problem()
    }
}

#[test]
#[ignore]
fn normal_jump_refinement_orders() {
    let scheme = StencilScheme::default_for(2);
    for (label, problem) in
        [("flat", smooth_flat_problem()), ("curved", smooth_curved_problem())]
    {
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        let mut prev: Option<GridField> = None;
        for cells in [32usize, 64, 128] {
            let grid = Grid::build(problem.domain, problem.iface.clone(), cells).unwrap();
            let p = params(1e-10);
            let t = Instant::now();
            let report = match &prev {
                None => solve(&problem, &grid, &scheme, &p).unwrap(),
                Some(coarse) => {
                    let init = prolong(coarse, &grid);
                    solve_with_init(&problem, &grid, &scheme, &p, &init).unwrap()
                }
            };
            assert!(report.converged);
            let jump = measure_normal_jump(&problem, &report.field).unwrap();
            eprintln!(
                "{label} cells {cells}: max_err {:.3e} interior {:.3e} ({} sweeps, {:?})",
                jump.max_err,
                jump.max_err_interior,
                report.sweeps,
                t.elapsed()
            );
            errs.push(jump.max_err_interior.ln());
            hs.push(grid.h.ln());
            prev = Some(report.field);
        }
        let n = errs.len() as f64;
        let mx = hs.iter().sum::<f64>() / n;
        let my = errs.iter().sum::<f64>() / n;
        let num: f64 = hs.iter().zip(errs.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = hs.iter().map(|x| (x - mx) * (x - mx)).sum();
        eprintln!("{label}: fitted order {:.3}", num / den);
    }
}
