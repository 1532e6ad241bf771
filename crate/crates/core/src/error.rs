use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid construction failed: {0}")]
    Grid(String),

    #[error("scheme not applicable: {0}")]
    SchemeInapplicable(String),

    #[error("interface too close to the fixed boundary at node {node}: {detail}")]
    NearBoundaryInterface { node: usize, detail: String },

    #[error("solver did not converge: residual {residual:.3e} after {sweeps} sweeps")]
    NonConvergence { residual: f64, sweeps: usize },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}
