//! Trajectory solvers: direct minimization of the discrete action and
//! Newton collocation of the canonical equations.

mod bfgs;
mod canonical;
mod direct;

pub use canonical::solve_canonical;
pub use direct::{discrete_action, solve_trajectory, DiscreteAction};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::UniformGrid;
use crate::report::ResidualReport;

/// Fixed endpoint values `q(a)` and `q(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    qa: Vec<f64>,
    qb: Vec<f64>,
}

impl BoundaryData {
    pub fn new(qa: Vec<f64>, qb: Vec<f64>) -> Result<Self> {
        if qa.is_empty() || qa.len() != qb.len() {
            return Err(Error::Mismatch(format!("boundary data has {} start and {} end values", qa.len(), qb.len())));
        }
        if qa.iter().chain(&qb).any(|x| !x.is_finite()) {
            return Err(Error::Mismatch("boundary values must be finite".into()));
        }
        Ok(Self { qa, qb })
    }

    pub fn qa(&self) -> &[f64] {
        &self.qa
    }

    pub fn qb(&self) -> &[f64] {
        &self.qb
    }

    pub fn dim(&self) -> usize {
        self.qa.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    /// Linear interpolant of the boundary data.
    #[default]
    Linear,
    /// One expression in `t` per coordinate; endpoint values are replaced by
    /// the boundary data.
    Expression(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Bound on `max_m |∂S/∂q_m| / w_m` (gradient per unit quadrature weight).
    pub gradient_tolerance: f64,
    /// Bound on the sup-norm of the collocation residual.
    pub residual_tolerance: f64,
    pub initial_guess: InitialGuess,
    pub seed: u64,
    /// Extra randomly perturbed starts used to report non-uniqueness.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
            residual_tolerance: 1e-10,
            initial_guess: InitialGuess::Linear,
            seed: 0,
            restarts: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Mismatch("max_iterations must be at least 1".into()));
        }
        for (name, v) in [("gradient_tolerance", self.gradient_tolerance), ("residual_tolerance", self.residual_tolerance)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Mismatch(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Starting values for every coordinate at every node.
    pub(crate) fn starting_values(&self, grid: &UniformGrid, bd: &BoundaryData) -> Result<Vec<Vec<f64>>> {
        let n = grid.n();
        let mut out = Vec::with_capacity(bd.dim());
        for i in 0..bd.dim() {
            let mut q: Vec<f64> = match &self.initial_guess {
                InitialGuess::Linear => {
                    let (qa, qb) = (bd.qa[i], bd.qb[i]);
                    (0..=n).map(|k| qa + (qb - qa) * k as f64 / n as f64).collect()
                }
                InitialGuess::Expression(exprs) => {
                    if exprs.len() != bd.dim() {
                        return Err(Error::Mismatch(format!(
                            "{} initial-guess expressions for {} coordinates",
                            exprs.len(),
                            bd.dim()
                        )));
                    }
                    crate::grid::GridFn::sample(&exprs[i], *grid)?.values().to_vec()
                }
            };
            q[0] = bd.qa[i];
            q[n] = bd.qb[i];
            out.push(q);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Canonical,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Canonical => "canonical",
        }
    }
}

/// Run statistics of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub method: Method,
    pub iterations: usize,
    /// Scaled gradient norm (direct) or residual sup-norm (canonical) at exit.
    pub final_norm: f64,
    /// Action (direct) or residual sup-norm (canonical) after each accepted step.
    pub history: Vec<f64>,
    /// Euler–Lagrange (direct) or canonical (canonical) residuals of the result.
    pub report: ResidualReport,
    /// Largest sup-norm distance between the main solution and the
    /// perturbed restarts, when restarts were requested.
    pub restart_disagreement: Option<f64>,
    /// The direct method found a stationary point that is not a minimizer.
    pub saddle: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub summary: SolveSummary,
}

fn check_dims(bd: &BoundaryData, dim: usize, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if bd.dim() != dim {
        return Err(Error::Mismatch(format!("boundary data for {} coordinates, problem has {dim}", bd.dim())));
    }
    Ok(())
}
