//! Scalar expressions over time, coordinates, fractional velocities, momenta
//! and the bar variables used by generating functions.
//!
//! Text syntax:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are `t`, `q<k>`, `v<k>`, `p<k>`, `P<k>`, `qbar<k>`, `Qbar<k>`
//! (1-based `k`) and the functions in [`Func`].

mod diff;
mod parse;
mod print;
mod quadratic;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use parse::{ParseError, ParseErrorKind};
pub use quadratic::QuadraticForm;
pub(crate) use quadratic::half_quadratic;

/// A variable of the expression language. Indices are 0-based; they print
/// 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Time,
    /// `q<k>`
    Coord(usize),
    /// `v<k>`, the combined Caputo derivative of `q<k>`.
    Velocity(usize),
    /// `p<k>`
    Momentum(usize),
    /// `P<k>`
    NewMomentum(usize),
    /// `qbar<k>`
    CoordBar(usize),
    /// `Qbar<k>`
    NewCoordBar(usize),
}

/// Variable family, i.e. a [`Var`] without its index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Time,
    Coord,
    Velocity,
    Momentum,
    NewMomentum,
    CoordBar,
    NewCoordBar,
}

impl Family {
    pub fn prefix(&self) -> &'static str {
        match self {
            Family::Time => "t",
            Family::Coord => "q",
            Family::Velocity => "v",
            Family::Momentum => "p",
            Family::NewMomentum => "P",
            Family::CoordBar => "qbar",
            Family::NewCoordBar => "Qbar",
        }
    }

    pub fn var(&self, index: usize) -> Var {
        match self {
            Family::Time => Var::Time,
            Family::Coord => Var::Coord(index),
            Family::Velocity => Var::Velocity(index),
            Family::Momentum => Var::Momentum(index),
            Family::NewMomentum => Var::NewMomentum(index),
            Family::CoordBar => Var::CoordBar(index),
            Family::NewCoordBar => Var::NewCoordBar(index),
        }
    }

    const INDEXED: [Family; 6] = [
        Family::Coord,
        Family::Velocity,
        Family::Momentum,
        Family::NewMomentum,
        Family::CoordBar,
        Family::NewCoordBar,
    ];
}

impl Var {
    pub fn family(&self) -> Family {
        match self {
            Var::Time => Family::Time,
            Var::Coord(_) => Family::Coord,
            Var::Velocity(_) => Family::Velocity,
            Var::Momentum(_) => Family::Momentum,
            Var::NewMomentum(_) => Family::NewMomentum,
            Var::CoordBar(_) => Family::CoordBar,
            Var::NewCoordBar(_) => Family::NewCoordBar,
        }
    }

    /// 0-based index; `None` for time.
    pub fn index(&self) -> Option<usize> {
        match *self {
            Var::Time => None,
            Var::Coord(i)
            | Var::Velocity(i)
            | Var::Momentum(i)
            | Var::NewMomentum(i)
            | Var::CoordBar(i)
            | Var::NewCoordBar(i) => Some(i),
        }
    }

    /// Parses a variable name such as `qbar2`; the index is not range-checked.
    pub fn from_name(name: &str) -> Option<Var> {
        if name == "t" {
            return Some(Var::Time);
        }
        let split = name.find(|c: char| c.is_ascii_digit())?;
        let (prefix, digits) = name.split_at(split);
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        if k == 0 {
            return None;
        }
        Family::INDEXED.iter().find(|f| f.prefix() == prefix).map(|f| f.var(k - 1))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index() {
            None => f.write_str("t"),
            Some(i) => write!(f, "{}{}", self.family().prefix(), i + 1),
        }
    }
}

/// Elementary functions. Adding one means extending `name`, `apply` and the
/// chain rule in `diff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    pub const ALL: [Func; 4] = [Func::Sin, Func::Cos, Func::Exp, Func::Log];

    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(&self, x: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Log if x > 0.0 => Ok(x.ln()),
            Func::Log => Err(EvalError::LogDomain(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no value bound for `{0}`")]
    MissingBinding(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("power {base}^{exponent} is undefined (non-integer exponent needs a positive base)")]
    PowDomain { base: f64, exponent: f64 },
}

/// Source of variable values during evaluation.
pub trait Bindings {
    fn lookup(&self, var: Var) -> Option<f64>;
}

impl Bindings for HashMap<Var, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(&var).copied()
    }
}

impl Bindings for HashMap<String, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(&var.to_string()).copied()
    }
}

impl Bindings for HashMap<&str, f64> {
    fn lookup(&self, var: Var) -> Option<f64> {
        self.get(var.to_string().as_str()).copied()
    }
}

/// Values of every variable family at one instant. Empty slices mean unbound.
#[derive(Debug, Clone, Copy, Default)]
pub struct Point<'a> {
    pub t: Option<f64>,
    pub q: &'a [f64],
    pub v: &'a [f64],
    pub p: &'a [f64],
    pub new_p: &'a [f64],
    pub qbar: &'a [f64],
    pub new_qbar: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn at(t: f64) -> Self {
        Self { t: Some(t), ..Default::default() }
    }

    pub fn q(mut self, q: &'a [f64]) -> Self {
        self.q = q;
        self
    }

    pub fn v(mut self, v: &'a [f64]) -> Self {
        self.v = v;
        self
    }

    pub fn p(mut self, p: &'a [f64]) -> Self {
        self.p = p;
        self
    }

    pub fn new_p(mut self, new_p: &'a [f64]) -> Self {
        self.new_p = new_p;
        self
    }

    pub fn qbar(mut self, qbar: &'a [f64]) -> Self {
        self.qbar = qbar;
        self
    }

    pub fn new_qbar(mut self, new_qbar: &'a [f64]) -> Self {
        self.new_qbar = new_qbar;
        self
    }
}

impl Bindings for Point<'_> {
    fn lookup(&self, var: Var) -> Option<f64> {
        match var {
            Var::Time => self.t,
            Var::Coord(i) => self.q.get(i).copied(),
            Var::Velocity(i) => self.v.get(i).copied(),
            Var::Momentum(i) => self.p.get(i).copied(),
            Var::NewMomentum(i) => self.new_p.get(i).copied(),
            Var::CoordBar(i) => self.qbar.get(i).copied(),
            Var::NewCoordBar(i) => self.new_qbar.get(i).copied(),
        }
    }
}

fn pow_checked(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        if base == 0.0 && exponent < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(base.powi(exponent as i32))
    } else if base > 0.0 {
        Ok(base.powf(exponent))
    } else if base == 0.0 && exponent > 0.0 {
        Ok(0.0)
    } else {
        Err(EvalError::PowDomain { base, exponent })
    }
}

impl Expr {
    /// Parses `text`, accepting indices `1..=n`.
    pub fn parse(text: &str, n: usize) -> Result<Expr, ParseError> {
        parse::parse(text, n)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn eval(&self, env: &impl Bindings) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.lookup(*v).ok_or_else(|| EvalError::MissingBinding(v.to_string()))?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, b) => pow_checked(a.eval(env)?, b.eval(env)?)?,
            Expr::Call(f, a) => f.apply(a.eval(env)?)?,
        })
    }

    /// All variables referenced, in sorted order.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// Exact partial derivative with respect to `var`, lightly simplified.
    pub fn diff(&self, var: Var) -> Expr {
        diff::diff(self, var)
    }

    /// Constant folding and identity elimination.
    pub fn simplify(&self) -> Expr {
        diff::simplify(self)
    }

    /// Replaces every occurrence of `var` and simplifies.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        diff::substitute(self, var, with)
    }

    /// Structure of `self` as a quadratic in `vars`, if its Hessian in those
    /// variables folds to constants.
    pub fn quadratic_in(&self, vars: &[Var]) -> Option<QuadraticForm> {
        quadratic::quadratic_in(self, vars)
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().fold(Expr::Const(0.0), diff::add)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        diff::add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        diff::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        diff::mul(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        diff::neg(self)
    }
}
