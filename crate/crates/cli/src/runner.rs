//! Experiment orchestration: single cases, refinement studies, suites, and
//! the envelope demo.  Exit codes: 0 success, 1 configuration error, 2 check
//! failure, 3 solver nonconvergence.

use crate::config::{CaseConfig, CheckSpec, ConfigError, SuiteManifest};
use crate::report::{
    self, CaseReport, CheckResult, GridInfo, SuiteCaseOutcome, SuiteConstants, SuiteSummary,
    SCHEMA_VERSION,
};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use translab_core::grid::{Grid, GridField, StencilScheme};
use translab_core::solve::{prolong, solve, solve_with_init, SolveReport};
use translab_core::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

pub struct CaseOutcome {
    pub exit: i32,
    pub report: Option<CaseReport>,
    pub out_dir: Option<PathBuf>,
}

fn case_name(config: &CaseConfig, path: &Path) -> String {
    config.name.clone().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
    })
}

pub fn out_root(cli_out: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("TRANSLAB_OUT_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("out")
}

fn config_fail(err: &dyn std::fmt::Display) -> CaseOutcome {
    eprintln!("error: {err}");
    CaseOutcome { exit: EXIT_CONFIG, report: None, out_dir: None }
}

pub fn run_case(config_path: &Path, out_dir_root: &Path) -> CaseOutcome {
    let config = match CaseConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => return config_fail(&e),
    };
    let name = case_name(&config, config_path);
    let out_dir = out_dir_root.join(&name);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return config_fail(&e);
    }
    match run_case_loaded(&config, config_path, &name, &out_dir) {
        Ok(outcome) => outcome,
        Err(e) => config_fail(&e),
    }
}

fn run_case_loaded(
    config: &CaseConfig,
    config_path: &Path,
    name: &str,
    out_dir: &Path,
) -> Result<CaseOutcome, ConfigError> {
    let problem = config.problem()?;
    let grid = Grid::build(problem.domain, problem.iface.clone(), config.grid.cells)?;
    let scheme = StencilScheme::new(problem.domain.n, config.grid.stencil_radius)?;
    let params = config.solve_params();
    let solve_report = solve(&problem, &grid, &scheme, &params)?;

    report::write_solution_csv(&out_dir.join("solution.csv"), &solve_report.field)
        .map_err(io_err(out_dir))?;
    report::write_residual_history_csv(
        &out_dir.join("residual_history.csv"),
        &solve_report.residual_history,
    )
    .map_err(io_err(out_dir))?;

    let mut checks = Vec::new();
    let mut max_jump_err = None;
    if solve_report.converged {
        for spec in &config.verify.checks {
            let result = run_check(spec, config, config_path, &problem, &grid, &scheme, &solve_report);
            if let CheckResult::NormalJump { max_err, .. } = &result {
                max_jump_err = Some(*max_err);
            }
            checks.push(result);
        }
    }
    let all_passed = checks.iter().all(|c| c.passed());
    let case_report = CaseReport {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed: config.seed,
        grid: GridInfo::of(&grid),
        converged: solve_report.converged,
        sweeps: solve_report.sweeps,
        final_residual: solve_report.residual_history.last().copied().unwrap_or(0.0),
        effective_tolerance: solve_report.effective_tolerance,
        monotone_iterates: solve_report.monotone_iterates,
        max_jump_err,
        checks,
        all_checks_passed: all_passed,
    };
    report::write_json(&out_dir.join("report.json"), &case_report).map_err(io_err(out_dir))?;
    let exit = if !solve_report.converged {
        EXIT_NONCONVERGENCE
    } else if !all_passed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    };
    Ok(CaseOutcome { exit, report: Some(case_report), out_dir: Some(out_dir.to_path_buf()) })
}

fn io_err(dir: &Path) -> impl Fn(std::io::Error) -> ConfigError + '_ {
    move |e| ConfigError::Io { path: dir.display().to_string(), source: e }
}

fn run_check(
    spec: &CheckSpec,
    config: &CaseConfig,
    config_path: &Path,
    problem: &translab_core::TransmissionProblem,
    grid: &Arc<Grid>,
    scheme: &StencilScheme,
    solve_report: &SolveReport,
) -> CheckResult {
    let requested = format!("{spec:?}");
    let fail = |message: String| CheckResult::Error { pass: false, requested, message };
    match spec {
        CheckSpec::NormalJump { max_err } => {
            match verify::measure_normal_jump(problem, &solve_report.field) {
                Ok(r) => CheckResult::NormalJump {
                    pass: max_err.map(|t| r.max_err <= t).unwrap_or(true),
                    max_err: r.max_err,
                    threshold: *max_err,
                },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::Abp { inner_radius, use_contact_set } => {
            match verify::check_abp(problem, &solve_report.field, *inner_radius, *use_contact_set) {
                Ok(r) => CheckResult::Abp { pass: r.fitted_c.is_finite(), report: r },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::MaxPrinciple { tol } => {
            match verify::check_maximum_principle(problem, &solve_report.field) {
                Ok(min_u) => CheckResult::MaxPrinciple { pass: min_u >= -tol, min_u, tol: *tol },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::Comparison { super_config, tol } => {
            let super_path = config_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(super_config);
            let sup = match CaseConfig::from_path(&super_path).and_then(|c| c.problem()) {
                Ok(p) => p,
                Err(e) => return fail(format!("super config: {e}")),
            };
            match verify::check_comparison(problem, &sup, grid, scheme, &config.solve_params()) {
                Ok(r) => CheckResult::Comparison {
                    pass: r.worst_violation <= *tol,
                    worst_violation: r.worst_violation,
                    tol: *tol,
                    super_config: super_config.clone(),
                },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::Oscillation { radius, suite_c } => {
            match verify::measure_oscillation_decay(
                problem,
                &solve_report.field,
                &[0.0; 3],
                *radius,
                *suite_c,
            ) {
                Ok(r) => CheckResult::Oscillation { pass: r.mu_hat < 1.0, report: r },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::RegularityFit { order, window } => {
            let w = window
                .map(|[lo, hi]| (lo, hi))
                .unwrap_or((8.0 * grid.h, 0.5));
            match verify::fit_regularity_exponent(
                &solve_report.field,
                &problem.iface,
                &[0.0; 3],
                *order,
                w,
            ) {
                Ok(fit) => CheckResult::RegularityFit {
                    pass: true,
                    normal_gradient_jump: if *order >= 1 {
                        fit.normal_gradient_jump(grid.n)
                    } else {
                        0.0
                    },
                    fit,
                },
                Err(e) => fail(e.to_string()),
            }
        }
        CheckSpec::Viscosity { tol } => {
            let sub = verify::check_viscosity_inequalities(
                &solve_report.field,
                problem,
                scheme,
                *tol,
                verify::AuditSide::Sub,
            );
            let sup = verify::check_viscosity_inequalities(
                &solve_report.field,
                problem,
                scheme,
                *tol,
                verify::AuditSide::Super,
            );
            match (sub, sup) {
                (Ok(a), Ok(b)) => CheckResult::Viscosity {
                    pass: a.ok() && b.ok(),
                    sub_violations: a.violations.len(),
                    super_violations: b.violations.len(),
                    tol: *tol,
                },
                (Err(e), _) | (_, Err(e)) => fail(e.to_string()),
            }
        }
        CheckSpec::InterfaceBarrier {} => {
            match verify::validate_interface_barrier(
                grid,
                problem.op_plus.lambda,
                problem.op_plus.lambda_cap,
                scheme,
                &config.solve_params(),
            ) {
                Ok(r) => CheckResult::InterfaceBarrier {
                    pass: r.c_plus_hat > 0.0 && r.c_minus_hat < 0.0,
                    c_plus_hat: r.c_plus_hat,
                    c_minus_hat: r.c_minus_hat,
                },
                Err(e) => fail(e.to_string()),
            }
        }
    }
}

fn log_log_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

pub fn run_refinement(config_path: &Path, levels: &[usize], out_dir_root: &Path) -> i32 {
    let config = match CaseConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if levels.len() < 3 {
        eprintln!("error: refinement needs at least 3 levels");
        return EXIT_CONFIG;
    }
    let name = case_name(&config, config_path);
    let out_dir = out_dir_root.join(&name);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    match refine_loaded(&config, levels, &out_dir) {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn refine_loaded(config: &CaseConfig, levels: &[usize], out_dir: &Path) -> Result<i32, ConfigError> {
    let problem = config.problem()?;
    let scheme = StencilScheme::new(problem.domain.n, config.grid.stencil_radius)?;
    let params = config.solve_params();
    let reference = config
        .refinement
        .reference
        .as_deref()
        .map(|src| crate::config::field_from_expr("refinement.reference", src))
        .transpose()?;

    let mut fields: Vec<GridField> = Vec::new();
    let mut jumps = Vec::new();
    let mut hs = Vec::new();
    let mut prev: Option<GridField> = None;
    for &cells in levels {
        if cells % 2 != 0 || cells < 8 {
            return Err(ConfigError::Invalid(format!("level {cells} must be even and >= 8")));
        }
        let grid = Grid::build(problem.domain, problem.iface.clone(), cells)?;
        let report = match &prev {
            None => solve(&problem, &grid, &scheme, &params)?,
            Some(coarse) => {
                let init = prolong(coarse, &grid);
                solve_with_init(&problem, &grid, &scheme, &params, &init)?
            }
        };
        if !report.converged {
            eprintln!("level {cells}: solver did not converge");
            return Ok(EXIT_NONCONVERGENCE);
        }
        let jump = verify::measure_normal_jump(&problem, &report.field)?;
        hs.push(grid.h);
        jumps.push(jump.max_err_interior);
        prev = Some(report.field.clone());
        fields.push(report.field);
    }

    // per-level solution errors against the analytic reference or the finest
    // grid (multilinear sample)
    let finest = fields.last().expect("at least 3 levels");
    let mut rows = Vec::new();
    let mut errs_u = Vec::new();
    for (i, field) in fields.iter().enumerate() {
        let grid = &field.grid;
        let err_u = if let Some(reference) = &reference {
            let mut e = 0.0f64;
            for idx in grid.node_indices() {
                e = e.max((field.value(idx) - reference.eval(&grid.coords(idx))).abs());
            }
            Some(e)
        } else if i + 1 < fields.len() {
            let sampled = prolong(finest, grid);
            let mut e = 0.0f64;
            for idx in grid.node_indices() {
                e = e.max((field.value(idx) - sampled.value(idx)).abs());
            }
            Some(e)
        } else {
            None
        };
        if let Some(e) = err_u {
            errs_u.push((grid.h, e));
        }
        rows.push((grid.cells, grid.h, err_u, jumps[i]));
    }
    report::write_refinement_csv(&out_dir.join("refinement.csv"), &rows).map_err(io_err(out_dir))?;

    let jump_order = log_log_slope(&hs, &jumps);
    println!("jump-error order: {jump_order:.3}");
    if errs_u.len() >= 2 {
        let (hh, ee): (Vec<f64>, Vec<f64>) = errs_u.iter().cloned().unzip();
        let machine = ee.iter().all(|e| *e < 1e-9);
        if machine {
            println!("solution order: exact (errors at solver precision)");
        } else {
            println!("solution order: {:.3}", log_log_slope(&hh, &ee));
        }
    }
    for (cells, h, err_u, jump) in &rows {
        println!(
            "cells {cells}: h {h:.5}, err_u {}, err_jump {jump:.3e}",
            err_u.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(EXIT_OK)
}

pub fn run_suite(manifest_path: &Path, out_dir_root: &Path) -> i32 {
    let manifest = match SuiteManifest::from_path(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let suite_dir = out_dir_root.join(&manifest.name);
    if let Err(e) = std::fs::create_dir_all(&suite_dir) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut outcomes = Vec::new();
    let mut constants = SuiteConstants::default();
    let mut failures = Vec::new();
    for case in &manifest.cases {
        let path = base.join(&case.path);
        let outcome = run_case(&path, &suite_dir);
        let mut failed_checks = Vec::new();
        if let Some(report) = &outcome.report {
            for check in &report.checks {
                if !check.passed() {
                    failed_checks.push(check_kind_name(check).to_string());
                }
                fold_constants(&mut constants, check);
            }
        }
        let passed = outcome.exit == EXIT_OK;
        if passed != case.expect_pass {
            failures.push(case.name.clone());
        }
        println!(
            "case {}: exit {} ({})",
            case.name,
            outcome.exit,
            if passed { "pass" } else { "fail" }
        );
        outcomes.push(SuiteCaseOutcome {
            name: case.name.clone(),
            exit: outcome.exit,
            passed,
            expect_pass: case.expect_pass,
            failed_checks,
        });
    }
    let summary = SuiteSummary {
        schema_version: SCHEMA_VERSION,
        suite: manifest.name.clone(),
        cases: outcomes,
        constants,
        failures: failures.clone(),
    };
    if let Err(e) = report::write_json(&suite_dir.join("suite_summary.json"), &summary) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if failures.is_empty() {
        EXIT_OK
    } else {
        eprintln!("suite failures: {}", failures.join(", "));
        EXIT_CHECK_FAILED
    }
}

fn check_kind_name(check: &CheckResult) -> &'static str {
    match check {
        CheckResult::NormalJump { .. } => "normal_jump",
        CheckResult::Abp { .. } => "abp",
        CheckResult::MaxPrinciple { .. } => "max_principle",
        CheckResult::Comparison { .. } => "comparison",
        CheckResult::Oscillation { .. } => "oscillation",
        CheckResult::RegularityFit { .. } => "regularity_fit",
        CheckResult::Viscosity { .. } => "viscosity",
        CheckResult::InterfaceBarrier { .. } => "interface_barrier",
        CheckResult::Error { .. } => "error",
    }
}

fn fold_constants(constants: &mut SuiteConstants, check: &CheckResult) {
    let fold_max = |slot: &mut Option<f64>, v: f64| {
        if v.is_finite() {
            *slot = Some(slot.map_or(v, |cur| cur.max(v)));
        }
    };
    match check {
        CheckResult::Abp { report, .. } => {
            fold_max(&mut constants.abp_c, report.fitted_c);
            if let Some(contact) = &report.contact {
                fold_max(&mut constants.abp_c_contact, contact.fitted_c);
            }
        }
        CheckResult::Oscillation { report, .. } => {
            fold_max(&mut constants.mu_max, report.mu_hat);
        }
        CheckResult::InterfaceBarrier { c_plus_hat, .. } => {
            let cur = constants.c0_plus_min;
            constants.c0_plus_min = Some(cur.map_or(*c_plus_hat, |c| c.min(*c_plus_hat)));
        }
        _ => {}
    }
}

pub fn run_envelope_demo(config_path: &Path, out_dir_root: &Path) -> i32 {
    let config = match CaseConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let name = case_name(&config, config_path);
    let out_dir = out_dir_root.join(&name);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let run = || -> Result<i32, ConfigError> {
        let problem = config.problem()?;
        let grid = Grid::build(problem.domain, problem.iface.clone(), config.grid.cells)?;
        let scheme = StencilScheme::new(problem.domain.n, config.grid.stencil_radius)?;
        let report = solve(&problem, &grid, &scheme, &config.solve_params())?;
        if !report.converged {
            return Ok(EXIT_NONCONVERGENCE);
        }
        let eps = config.envelope.eps;
        let upper = translab_core::envelopes::upper_envelope_xprime(&report.field, eps)?;
        let lower = translab_core::envelopes::lower_envelope_xprime(&report.field, eps)?;
        report::write_envelope_csv(&out_dir.join("envelope.csv"), &report.field, &upper, &lower)
            .map_err(io_err(&out_dir))?;
        println!("envelope demo written to {}", out_dir.display());
        Ok(EXIT_OK)
    };
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
