//! Serialized artifacts: the per-case JSON report and the CSV tables.
//! Field names and column layouts are frozen; see docs/formats.md.

use serde::Serialize;
use std::io::Write;
use std::path::Path;
use translab_core::grid::{Grid, GridField, NodeClass};
use translab_core::verify::{AbpReport, OscillationReport, RegularityFit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct GridInfo {
    pub n: usize,
    pub cells: usize,
    pub h: f64,
    pub nodes: usize,
    pub interface_nodes: usize,
}

impl GridInfo {
    pub fn of(grid: &Grid) -> Self {
        Self {
            n: grid.n,
            cells: grid.cells,
            h: grid.h,
            nodes: grid.num_nodes(),
            interface_nodes: grid.interface_nodes().len(),
        }
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckResult {
    NormalJump {
        pass: bool,
        max_err: f64,
        threshold: Option<f64>,
    },
    Abp {
        pass: bool,
        #[serde(flatten)]
        report: AbpReport,
    },
    MaxPrinciple {
        pass: bool,
        min_u: f64,
        tol: f64,
    },
    Comparison {
        pass: bool,
        worst_violation: f64,
        tol: f64,
        super_config: String,
    },
    Oscillation {
        pass: bool,
        #[serde(flatten)]
        report: OscillationReport,
    },
    RegularityFit {
        pass: bool,
        normal_gradient_jump: f64,
        #[serde(flatten)]
        fit: RegularityFit,
    },
    Viscosity {
        pass: bool,
        sub_violations: usize,
        super_violations: usize,
        tol: f64,
    },
    InterfaceBarrier {
        pass: bool,
        c_plus_hat: f64,
        c_minus_hat: f64,
    },
    Error {
        pass: bool,
        requested: String,
        message: String,
    },
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        match self {
            CheckResult::NormalJump { pass, .. }
            | CheckResult::Abp { pass, .. }
            | CheckResult::MaxPrinciple { pass, .. }
            | CheckResult::Comparison { pass, .. }
            | CheckResult::Oscillation { pass, .. }
            | CheckResult::RegularityFit { pass, .. }
            | CheckResult::Viscosity { pass, .. }
            | CheckResult::InterfaceBarrier { pass, .. }
            | CheckResult::Error { pass, .. } => *pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CaseReport {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub grid: GridInfo,
    pub converged: bool,
    pub sweeps: usize,
    pub final_residual: f64,
    pub effective_tolerance: f64,
    pub monotone_iterates: bool,
    /// Convenience copy of the normal-jump check result, when requested.
    pub max_jump_err: Option<f64>,
    pub checks: Vec<CheckResult>,
    pub all_checks_passed: bool,
}

#[derive(Debug, Serialize)]
pub struct SuiteCaseOutcome {
    pub name: String,
    pub exit: i32,
    pub passed: bool,
    pub expect_pass: bool,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct SuiteConstants {
    /// Largest fitted ABP constant over the suite.
    pub abp_c: Option<f64>,
    /// Largest contact-restricted ABP constant.
    pub abp_c_contact: Option<f64>,
    /// Largest measured oscillation ratio.
    pub mu_max: Option<f64>,
    /// Smallest plus-side barrier derivative.
    pub c0_plus_min: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SuiteSummary {
    pub schema_version: u32,
    pub suite: String,
    pub cases: Vec<SuiteCaseOutcome>,
    pub constants: SuiteConstants,
    pub failures: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")
}

fn class_name(class: NodeClass) -> &'static str {
    match class {
        NodeClass::InteriorPlus => "plus",
        NodeClass::InteriorMinus => "minus",
        NodeClass::Interface => "interface",
        NodeClass::Boundary => "boundary",
    }
}

pub fn write_solution_csv(path: &Path, field: &GridField) -> std::io::Result<()> {
    let grid = &field.grid;
    let mut out = String::new();
    out.push_str(if grid.n == 2 { "x1,x2,side,u\n" } else { "x1,x2,x3,side,u\n" });
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        for a in 0..grid.n {
            out.push_str(&format!("{},", x[a]));
        }
        out.push_str(&format!("{},{}\n", class_name(grid.class(idx)), field.value(idx)));
    }
    std::fs::write(path, out)
}

pub fn write_residual_history_csv(path: &Path, history: &[f64]) -> std::io::Result<()> {
    let mut out = String::from("sweep,max_residual\n");
    for (i, r) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, r));
    }
    std::fs::write(path, out)
}

pub fn write_refinement_csv(
    path: &Path,
    rows: &[(usize, f64, Option<f64>, f64)],
) -> std::io::Result<()> {
    let mut out = String::from("cells,h,err_u,err_jump\n");
    for (cells, h, err_u, err_jump) in rows {
        let eu = err_u.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{cells},{h},{eu},{err_jump}\n"));
    }
    std::fs::write(path, out)
}

pub fn write_envelope_csv(
    path: &Path,
    u: &GridField,
    upper: &GridField,
    lower: &GridField,
) -> std::io::Result<()> {
    let grid = &u.grid;
    let mut out = String::new();
    out.push_str(if grid.n == 2 {
        "x1,x2,u,upper,lower\n"
    } else {
        "x1,x2,x3,u,upper,lower\n"
    });
    for idx in grid.node_indices() {
        let x = grid.coords(idx);
        for a in 0..grid.n {
            out.push_str(&format!("{},", x[a]));
        }
        out.push_str(&format!("{},{},{}\n", u.value(idx), upper.value(idx), lower.value(idx)));
    }
    std::fs::write(path, out)
}
