//! Case configuration: a single TOML tree describing the problem, grid,
//! solver, and requested checks.  Unknown keys are hard errors so typos
//! cannot silently change an experiment.

use crate::expr;
use serde::Deserialize;
use std::path::Path;
use translab_core::grid::ScalarField;
use translab_core::operators::{BlendWeight, OperatorKind};
use translab_core::solve::{SolveParams, SweepOrder};
use translab_core::{
    CoreError, DomainSpec, EllipticOperator, InterfaceGraph, Shape, SymMatrix,
    TransmissionProblem,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("in expression `{field}` {source}")]
    Expr {
        field: String,
        #[source]
        source: expr::ParseError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainBlock,
    #[serde(default)]
    pub psi: PsiBlock,
    pub operators: OperatorsBlock,
    pub data: DataBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub solve: SolveBlock,
    #[serde(default)]
    pub envelope: EnvelopeBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub refinement: RefinementBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub shape: Shape,
    pub n: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiBlock {
    #[serde(default)]
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsBlock {
    pub plus: OperatorSpec,
    pub minus: OperatorSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub kind: String,
    pub lambda: f64,
    pub lambda_cap: f64,
    /// Coefficient matrix for `kind = "linear"`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Member matrices for `kind = "bellman_min"`.
    pub members: Option<Vec<Vec<Vec<f64>>>>,
    /// Blend band half-width for `kind = "blend"`.
    pub eps: Option<f64>,
    pub blend_plus: Option<Box<OperatorSpec>>,
    pub blend_minus: Option<Box<OperatorSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub f_plus: String,
    pub f_minus: String,
    pub g: String,
    pub boundary: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub cells: usize,
    #[serde(default = "default_radius")]
    pub stencil_radius: u8,
}

fn default_radius() -> u8 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveBlock {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub order: SweepOrder,
    pub damping: f64,
    pub bracket_seed: bool,
}

impl Default for SolveBlock {
    fn default() -> Self {
        let p = SolveParams::default();
        Self {
            tolerance: p.tolerance,
            max_sweeps: p.max_sweeps,
            order: p.sweep_order,
            damping: p.damping,
            bracket_seed: p.bracket_seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeBlock {
    pub eps: f64,
}

impl Default for EnvelopeBlock {
    fn default() -> Self {
        Self { eps: 0.1 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

/// One requested check.  A check with a pass threshold set is "hard": its
/// failure drives the exit status.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum CheckSpec {
    NormalJump {
        /// Hard bound on the max jump error.
        max_err: Option<f64>,
    },
    Abp {
        inner_radius: f64,
        #[serde(default)]
        use_contact_set: bool,
    },
    MaxPrinciple {
        tol: f64,
    },
    Comparison {
        /// Path to the super problem's config, relative to this config.
        super_config: String,
        tol: f64,
    },
    Oscillation {
        radius: f64,
        #[serde(default)]
        suite_c: f64,
    },
    RegularityFit {
        order: u32,
        window: Option<[f64; 2]>,
    },
    Viscosity {
        tol: f64,
    },
    InterfaceBarrier {},
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementBlock {
    /// Analytic reference solution; when absent, refinement studies compare
    /// against the finest grid.
    pub reference: Option<String>,
}

impl CaseConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: CaseConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.domain.n != 2 && self.domain.n != 3 {
            return Err(ConfigError::Invalid(format!(
                "domain.n must be 2 or 3, got {}",
                self.domain.n
            )));
        }
        if self.grid.cells % 2 != 0 || self.grid.cells < 8 {
            return Err(ConfigError::Invalid(format!(
                "grid.cells must be even and >= 8, got {}",
                self.grid.cells
            )));
        }
        for (field, src) in self.expressions() {
            let e = parse_field(field, src)?;
            if let Some(v) = e.max_var() {
                if v + 1 > self.domain.n {
                    return Err(ConfigError::Invalid(format!(
                        "expression `{field}` uses x{} but the domain is {}-dimensional",
                        v + 1,
                        self.domain.n
                    )));
                }
            }
        }
        Ok(())
    }

    fn expressions(&self) -> Vec<(&'static str, &str)> {
        let mut v = vec![
            ("data.f_plus", self.data.f_plus.as_str()),
            ("data.f_minus", self.data.f_minus.as_str()),
            ("data.g", self.data.g.as_str()),
            ("data.boundary", self.data.boundary.as_str()),
        ];
        if let Some(r) = &self.refinement.reference {
            v.push(("refinement.reference", r.as_str()));
        }
        v
    }

    pub fn interface(&self) -> Result<InterfaceGraph, ConfigError> {
        Ok(InterfaceGraph::from_dense_coeffs(self.domain.n, &self.psi.coeffs)?)
    }

    pub fn problem(&self) -> Result<TransmissionProblem, ConfigError> {
        let domain = DomainSpec::new(self.domain.shape, self.domain.n)?;
        let iface = self.interface()?;
        let problem = TransmissionProblem {
            op_plus: build_operator(&self.operators.plus, self.domain.n, &iface)?,
            op_minus: build_operator(&self.operators.minus, self.domain.n, &iface)?,
            f_plus: field_from_expr("data.f_plus", &self.data.f_plus)?,
            f_minus: field_from_expr("data.f_minus", &self.data.f_minus)?,
            g: field_from_expr("data.g", &self.data.g)?,
            boundary: field_from_expr("data.boundary", &self.data.boundary)?,
            iface,
            domain,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams {
            tolerance: self.solve.tolerance,
            max_sweeps: self.solve.max_sweeps,
            sweep_order: self.solve.order,
            damping: self.solve.damping,
            bracket_seed: self.solve.bracket_seed,
        }
    }
}

fn parse_field(field: &'static str, src: &str) -> Result<expr::Expr, ConfigError> {
    expr::parse(src).map_err(|source| ConfigError::Expr { field: field.to_string(), source })
}

pub fn field_from_expr(field: &'static str, src: &str) -> Result<ScalarField, ConfigError> {
    let e = parse_field(field, src)?;
    Ok(ScalarField::new(move |x| e.eval(x)))
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<SymMatrix, ConfigError> {
    Ok(SymMatrix::from_rows(rows)?)
}

fn build_operator(
    spec: &OperatorSpec,
    n: usize,
    iface: &InterfaceGraph,
) -> Result<EllipticOperator, ConfigError> {
    let kind = match spec.kind.as_str() {
        "pucci_minus" => OperatorKind::PucciMinus,
        "pucci_plus" => OperatorKind::PucciPlus,
        "linear" => {
            let rows = spec.matrix.as_ref().ok_or_else(|| {
                ConfigError::Invalid("linear operator needs `matrix`".into())
            })?;
            if rows.len() != n {
                return Err(ConfigError::Invalid(format!(
                    "operator matrix must be {n}x{n}"
                )));
            }
            OperatorKind::Linear(matrix_from_rows(rows)?)
        }
        "bellman_min" => {
            let members = spec.members.as_ref().ok_or_else(|| {
                ConfigError::Invalid("bellman_min operator needs `members`".into())
            })?;
            let mats = members
                .iter()
                .map(|rows| matrix_from_rows(rows))
                .collect::<Result<Vec<_>, _>>()?;
            OperatorKind::BellmanMin(mats)
        }
        "blend" => {
            let eps = spec.eps.ok_or_else(|| {
                ConfigError::Invalid("blend operator needs `eps`".into())
            })?;
            let plus = spec.blend_plus.as_ref().ok_or_else(|| {
                ConfigError::Invalid("blend operator needs `blend_plus`".into())
            })?;
            let minus = spec.blend_minus.as_ref().ok_or_else(|| {
                ConfigError::Invalid("blend operator needs `blend_minus`".into())
            })?;
            OperatorKind::Blend {
                plus: Box::new(build_operator(plus, n, iface)?),
                minus: Box::new(build_operator(minus, n, iface)?),
                weight: BlendWeight { iface: iface.clone(), eps },
            }
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown operator kind `{other}` (expected pucci_minus, pucci_plus, linear, bellman_min, blend)"
            )))
        }
    };
    Ok(EllipticOperator::new(kind, spec.lambda, spec.lambda_cap)?)
}

// ---------------------------------------------------------------------------
// Suite manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub name: String,
    #[serde(default, rename = "case")]
    pub cases: Vec<SuiteCase>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteCase {
    pub name: String,
    /// Path to the case config, relative to the manifest.
    pub path: String,
    #[serde(default = "default_expect_pass")]
    pub expect_pass: bool,
}

fn default_expect_pass() -> bool {
    true
}

impl SuiteManifest {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: SuiteManifest = toml::from_str(&text)?;
        let mut seen = std::collections::BTreeSet::new();
        for case in &manifest.cases {
            if !seen.insert(case.name.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate case name `{}` in suite",
                    case.name
                )));
            }
        }
        Ok(manifest)
    }
}
