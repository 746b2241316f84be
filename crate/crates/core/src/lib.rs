//! Numerical toolkit for variational mechanics with combined Caputo fractional
//! derivatives.
//!
//! The crate discretizes the combined operators
//!
//! ```text
//! ^C D^{α,β}_γ     = γ·(left Caputo, order α) + (1−γ)·(right Caputo, order β)
//! D^{β,α}_{1−γ}    = (1−γ)·(left RL, order β) + γ·(right RL, order α)
//! ```
//!
//! on uniform grids, derives momenta and Hamiltonians from symbolic
//! Lagrangians, solves variational problems by direct minimization of the
//! discrete action or by collocation of the canonical equations, and checks
//! the Euler–Lagrange equations, canonical equations, constants of motion,
//! canonical transformations and the Hamilton–Jacobi equation as residuals.

pub mod dynamics;
pub mod error;
pub mod expr;
pub mod frac_ops;
pub mod gamma;
pub mod grid;
pub mod io;
pub mod model;
pub mod report;
pub mod solver;
pub mod transforms;

pub use dynamics::Trajectory;
pub use error::{Error, Result};
pub use expr::{Expr, Var};
pub use frac_ops::FracOrder;
pub use grid::{GridFn, UniformGrid};
pub use model::{GeneratingFunction, GeneratingKind, HamiltonianSpec, LagrangianSpec};
pub use report::ResidualReport;
pub use solver::{BoundaryData, InitialGuess, SolverConfig};
