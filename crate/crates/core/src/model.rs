//! Lagrangians, Hamiltonians and generating functions: expressions tied to a
//! coordinate count and a variable vocabulary.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{Expr, Family, Var};
use crate::frac_ops::FracOrder;

fn check_vocabulary(body: &Expr, n: usize, allowed: &[Family]) -> Result<()> {
    for var in body.variables() {
        let in_range = var.index().is_none_or(|i| i < n);
        if !allowed.contains(&var.family()) || !in_range {
            let names: Vec<&str> = allowed.iter().map(|f| f.prefix()).collect();
            return Err(Error::ForbiddenVariable {
                allowed: format!("{{{}}} with indices 1..={n}", names.join(", ")),
                found: var.to_string(),
            });
        }
    }
    Ok(())
}

fn check_orders(n: usize, orders: &[FracOrder]) -> Result<()> {
    if n == 0 {
        return Err(Error::Mismatch("coordinate count must be at least 1".into()));
    }
    if orders.len() != n {
        return Err(Error::Mismatch(format!("{} orders given for {n} coordinates", orders.len())));
    }
    Ok(())
}

/// `L(t, q, v)` where `v_i` stands for the combined Caputo derivative of `q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSpec {
    orders: Vec<FracOrder>,
    body: Expr,
}

impl LagrangianSpec {
    pub fn new(orders: Vec<FracOrder>, body: Expr) -> Result<Self> {
        let n = orders.len();
        check_orders(n, &orders)?;
        check_vocabulary(&body, n, &[Family::Time, Family::Coord, Family::Velocity])?;
        Ok(Self { orders, body })
    }

    pub fn parse(text: &str, orders: Vec<FracOrder>) -> Result<Self> {
        let body = Expr::parse(text, orders.len())?;
        Self::new(orders, body)
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    pub fn orders(&self) -> &[FracOrder] {
        &self.orders
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    pub fn velocity_vars(&self) -> Vec<Var> {
        (0..self.dim()).map(Var::Velocity).collect()
    }
}

impl fmt::Display for LagrangianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)
    }
}

/// `H(t, q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    orders: Vec<FracOrder>,
    body: Expr,
}

impl HamiltonianSpec {
    pub fn new(orders: Vec<FracOrder>, body: Expr) -> Result<Self> {
        let n = orders.len();
        check_orders(n, &orders)?;
        check_vocabulary(&body, n, &[Family::Time, Family::Coord, Family::Momentum])?;
        Ok(Self { orders, body })
    }

    pub fn parse(text: &str, orders: Vec<FracOrder>) -> Result<Self> {
        let body = Expr::parse(text, orders.len())?;
        Self::new(orders, body)
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    pub fn orders(&self) -> &[FracOrder] {
        &self.orders
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }
}

impl fmt::Display for HamiltonianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratingKind {
    /// `F1(t, qbar, Qbar)`
    First,
    /// `F2(t, qbar, P)`
    Second,
}

impl GeneratingKind {
    fn vocabulary(&self) -> [Family; 3] {
        match self {
            GeneratingKind::First => [Family::Time, Family::CoordBar, Family::NewCoordBar],
            GeneratingKind::Second => [Family::Time, Family::CoordBar, Family::NewMomentum],
        }
    }
}

/// Generating function of a canonical transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    kind: GeneratingKind,
    dim: usize,
    body: Expr,
}

impl GeneratingFunction {
    pub fn new(kind: GeneratingKind, dim: usize, body: Expr) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Mismatch("coordinate count must be at least 1".into()));
        }
        check_vocabulary(&body, dim, &kind.vocabulary())?;
        Ok(Self { kind, dim, body })
    }

    pub fn parse(kind: GeneratingKind, dim: usize, text: &str) -> Result<Self> {
        Self::new(kind, dim, Expr::parse(text, dim)?)
    }

    pub fn kind(&self) -> GeneratingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(n: usize) -> Vec<FracOrder> {
        vec![FracOrder::new(0.5, 0.5, 0.5).unwrap(); n]
    }

    #[test]
    fn vocabularies_are_enforced() {
        assert!(LagrangianSpec::parse("0.5*v1^2 - 0.5*q1^2 + t", orders(1)).is_ok());
        assert!(LagrangianSpec::parse("0.5*v1^2 + p1", orders(1)).is_err());
        assert!(HamiltonianSpec::parse("0.5*p1^2 + 0.5*q1^2", orders(1)).is_ok());
        assert!(HamiltonianSpec::parse("0.5*v1^2", orders(1)).is_err());
        assert!(GeneratingFunction::parse(GeneratingKind::First, 1, "qbar1*Qbar1").is_ok());
        assert!(GeneratingFunction::parse(GeneratingKind::First, 1, "qbar1*P1").is_err());
        assert!(GeneratingFunction::parse(GeneratingKind::Second, 1, "qbar1*P1 - 0.5*P1^2*t").is_ok());
        assert!(GeneratingFunction::parse(GeneratingKind::Second, 1, "Qbar1").is_err());
    }

    #[test]
    fn index_range_follows_orders() {
        assert!(LagrangianSpec::parse("v2", orders(1)).is_err());
        let body = Expr::Var(Var::Coord(3));
        assert!(LagrangianSpec::new(orders(2), body).is_err());
        assert!(LagrangianSpec::new(vec![], Expr::Const(1.0)).is_err());
    }
}
