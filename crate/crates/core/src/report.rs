//! Residual reports shared by every identity check.

use crate::grid::GridFn;

/// Nodes dropped at each end of the grid before computing norms.
pub const EDGE_EXCLUSION: usize = 2;

/// One residual equation, sampled on the grid, with its norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationResidual {
    pub name: String,
    pub residual: GridFn,
    pub sup_norm: f64,
    pub rms: f64,
    pub included_nodes: usize,
    pub excluded_nodes: usize,
    pub passed: bool,
}

impl EquationResidual {
    /// Norms cover nodes that are valid and at least [`EDGE_EXCLUSION`] nodes
    /// away from both ends. Summation runs in node order.
    pub fn new(name: impl Into<String>, residual: GridFn, tolerance: f64) -> Self {
        let n = residual.grid().n();
        let mut sup: f64 = 0.0;
        let mut sum_sq = 0.0;
        let mut included = 0;
        for k in EDGE_EXCLUSION..=n.saturating_sub(EDGE_EXCLUSION) {
            if let Some(r) = residual.value(k) {
                sup = sup.max(r.abs());
                sum_sq += r * r;
                included += 1;
            }
        }
        let rms = if included > 0 { (sum_sq / included as f64).sqrt() } else { 0.0 };
        Self {
            name: name.into(),
            excluded_nodes: residual.len() - included,
            residual,
            sup_norm: sup,
            rms,
            included_nodes: included,
            passed: sup <= tolerance,
        }
    }
}

/// A set of residual equations checked against one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub title: String,
    pub tolerance: f64,
    pub equations: Vec<EquationResidual>,
    /// Set when the verdict rests on an unverified premise, e.g. a constant
    /// of motion checked along a trajectory that fails the canonical equations.
    pub advisory: bool,
    pub notes: Vec<String>,
}

impl ResidualReport {
    pub fn new(title: impl Into<String>, tolerance: f64) -> Self {
        Self { title: title.into(), tolerance, equations: Vec::new(), advisory: false, notes: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, residual: GridFn) {
        self.equations.push(EquationResidual::new(name, residual, self.tolerance));
    }

    pub fn passed(&self) -> bool {
        self.equations.iter().all(|e| e.passed)
    }

    pub fn sup_norm(&self) -> f64 {
        self.equations.iter().map(|e| e.sup_norm).fold(0.0, f64::max)
    }

    pub fn equation(&self, name: &str) -> Option<&EquationResidual> {
        self.equations.iter().find(|e| e.name == name)
    }
}
