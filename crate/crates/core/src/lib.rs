//! Numerical laboratory for fully nonlinear elliptic transmission problems
//! with a prescribed jump of the normal derivative across an interface:
//!
//! ```text
//!   F^+(D^2 u) = f^+        above the interface
//!   F^-(D^2 u) = f^-        below the interface
//!   u_nu^+ - u_nu^- = g     on the interface x_n = psi(x')
//! ```
//!
//! The crate builds monotone wide-stencil discretizations on classified
//! Cartesian grids, solves them by damped Gauss-Seidel sweeps bracketed by
//! explicit sub/supersolutions, and turns the structure theory of such
//! problems (ABP bounds, maximum and comparison principles, oscillation
//! decay, pointwise regularity exponents, envelope calculus, barrier
//! positivity) into executable checks.

pub mod envelopes;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod matrix;
pub mod operators;
pub mod solve;
pub mod verify;

pub use error::CoreError;
pub use geometry::{DomainSpec, InterfaceGraph, Shape, Side};
pub use grid::{Grid, GridField, NodeClass, ScalarField, StencilScheme, TransmissionProblem};
pub use matrix::SymMatrix;
pub use operators::{EllipticOperator, OperatorKind};
pub use solve::{SolveParams, SolveReport, SweepOrder};
