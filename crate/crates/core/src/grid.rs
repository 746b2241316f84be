//! Uniform time grids and functions sampled on them.
//!
//! A [`GridFn`] carries a validity mask alongside its values. Nodes where a
//! Riemann–Liouville derivative is singular are flagged invalid instead of
//! being clipped, so norms downstream can skip them.

use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Var};

/// Smallest admissible interval count.
pub const MIN_INTERVALS: usize = 4;

/// Uniform partition of `[a, b]` into `n` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    a: f64,
    b: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidGrid(format!("endpoints must be finite, got [{a}, {b}]")));
        }
        if a >= b {
            return Err(Error::InvalidGrid(format!("empty interval [{a}, {b}]")));
        }
        if n < MIN_INTERVALS {
            return Err(Error::InvalidGrid(format!(
                "n = {n} is below the minimum of {MIN_INTERVALS} intervals"
            )));
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of intervals; there are `n + 1` nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    /// Node `k`; the last node is exactly `b`.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n {
            self.b
        } else {
            self.a + k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.node(k)).collect()
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.len()];
        w[0] = 0.5 * h;
        w[self.n] = 0.5 * h;
        w
    }
}

/// Real function sampled on a [`UniformGrid`].
///
/// Equality compares grids, masks and the values at valid nodes.
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: UniformGrid,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl PartialEq for GridFn {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.valid == other.valid
            && self.values.iter().zip(&other.values).zip(&self.valid).all(|((a, b), &ok)| !ok || a == b)
    }
}

impl GridFn {
    /// Fully valid function from raw values.
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::with_mask(grid, values, valid)
    }

    pub fn with_mask(grid: UniformGrid, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || valid.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "grid has {} nodes but got {} values and {} mask entries",
                grid.len(),
                values.len(),
                valid.len()
            )));
        }
        if let Some(k) = (0..values.len()).find(|&k| valid[k] && !values[k].is_finite()) {
            return Err(Error::InvalidNode { node: k });
        }
        Ok(Self { grid, values, valid })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        Self::from_fn(grid, |_| 0.0)
    }

    pub fn constant(grid: UniformGrid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self { grid, values, valid }
    }

    /// Samples an expression in `t` at every node.
    pub fn sample(expr: &Expr, grid: UniformGrid) -> Result<Self> {
        if let Some(var) = expr.variables().into_iter().find(|v| *v != Var::Time) {
            return Err(Error::ForbiddenVariable { allowed: "t".into(), found: var.to_string() });
        }
        let values = grid
            .nodes()
            .into_iter()
            .enumerate()
            .map(|(k, t)| expr.eval(&Point::at(t)).map_err(|source| Error::EvalAt { node: k, source }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.valid[k].then(|| self.values[k])
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.valid[k]
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn first_invalid(&self) -> Option<usize> {
        self.valid.iter().position(|&v| !v)
    }

    pub(crate) fn require_valid(&self) -> Result<()> {
        match self.first_invalid() {
            Some(node) => Err(Error::InvalidNode { node }),
            None => Ok(()),
        }
    }

    pub(crate) fn ensure_same_grid(&self, other: &GridFn) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch(format!("grids differ: {:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Reverses node order; the image of `t ↦ a + b − t`.
    pub fn reflect(&self) -> Self {
        let mut values = self.values.clone();
        let mut valid = self.valid.clone();
        values.reverse();
        valid.reverse();
        Self { grid: self.grid, values, valid }
    }

    /// Nodewise map; NaN results are flagged invalid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for k in 0..out.len() {
            if out.valid[k] {
                out.values[k] = f(out.values[k]);
                out.valid[k] = out.values[k].is_finite();
            }
        }
        out
    }

    /// `c1·self + c2·other`, valid where both are valid.
    pub fn lin_comb(&self, c1: f64, other: &GridFn, c2: f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let mut values = Vec::with_capacity(self.len());
        let mut valid = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let ok = self.valid[k] && other.valid[k];
            valid.push(ok);
            values.push(if ok { c1 * self.values[k] + c2 * other.values[k] } else { f64::NAN });
        }
        Ok(Self { grid: self.grid, values, valid })
    }

    pub fn add(&self, other: &GridFn) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridFn) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn mul(&self, other: &GridFn) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let mut out = self.clone();
        for k in 0..out.len() {
            out.valid[k] = self.valid[k] && other.valid[k];
            out.values[k] = if out.valid[k] { self.values[k] * other.values[k] } else { f64::NAN };
        }
        Ok(out)
    }

    /// Sup norm over valid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    pub(crate) fn set_invalid(&mut self, k: usize) {
        self.valid[k] = false;
        self.values[k] = f64::NAN;
    }
}

/// Second-order finite-difference derivative: central in the interior,
/// one-sided three-point at the endpoints.
pub fn classical_derivative(f: &GridFn) -> Result<GridFn> {
    f.require_valid()?;
    let n = f.grid.n;
    let h = f.grid.h();
    let y = &f.values;
    let mut d = vec![0.0; n + 1];
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    for k in 1..n {
        d[k] = (y[k + 1] - y[k - 1]) / (2.0 * h);
    }
    d[n] = (3.0 * y[n] - 4.0 * y[n - 1] + y[n - 2]) / (2.0 * h);
    GridFn::new(f.grid, d)
}

/// Result of [`cumulative_integral_logged`].
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeIntegral {
    pub integral: GridFn,
    /// Endpoint nodes whose values were imputed by linear extrapolation.
    pub patched_nodes: Vec<usize>,
}

/// Trapezoid running integral from `a`; `result[0] = 0`.
pub fn cumulative_integral(f: &GridFn) -> Result<GridFn> {
    cumulative_integral_logged(f).map(|r| r.integral)
}

/// As [`cumulative_integral`], also reporting which endpoint nodes were patched.
///
/// A single invalid node at either end is replaced by linear extrapolation
/// from its two nearest neighbours. Any other invalid node is an error.
pub fn cumulative_integral_logged(f: &GridFn) -> Result<CumulativeIntegral> {
    let n = f.grid.n;
    let mut y = f.values.clone();
    let mut patched = Vec::new();

    let leading = f.valid.iter().take_while(|&&v| !v).count();
    let trailing = f.valid.iter().rev().take_while(|&&v| !v).count();
    if leading > 1 {
        return Err(Error::UnpatchableEndpoint { side: "left", count: leading });
    }
    if trailing > 1 {
        return Err(Error::UnpatchableEndpoint { side: "right", count: trailing });
    }
    if let Some(k) = (leading..=n - trailing).find(|&k| !f.valid[k]) {
        return Err(Error::InvalidNode { node: k });
    }
    if leading == 1 {
        y[0] = 2.0 * y[1] - y[2];
        patched.push(0);
    }
    if trailing == 1 {
        y[n] = 2.0 * y[n - 1] - y[n - 2];
        patched.push(n);
    }
    if !patched.is_empty() {
        log::debug!("cumulative_integral: extrapolated endpoint nodes {patched:?}");
    }

    let h = f.grid.h();
    let mut acc = vec![0.0; n + 1];
    for k in 1..=n {
        acc[k] = acc[k - 1] + 0.5 * h * (y[k - 1] + y[k]);
    }
    Ok(CumulativeIntegral { integral: GridFn::new(f.grid, acc)?, patched_nodes: patched })
}
