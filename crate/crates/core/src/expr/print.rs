use std::fmt;

use super::Expr;

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => ADD,
        Expr::Mul(..) | Expr::Div(..) => MUL,
        Expr::Neg(_) => NEG,
        Expr::Const(c) if c.is_sign_negative() && *c != 0.0 => NEG,
        Expr::Pow(..) => POW,
        _ => ATOM,
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        write!(f, "{x}")
    } else {
        write!(f, "{x:?}")
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        f.write_str("(")?;
        write_expr(f, e)?;
        f.write_str(")")
    } else {
        write_expr(f, e)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Const(c) => write_number(f, *c),
        Expr::Var(v) => write!(f, "{v}"),
        Expr::Neg(a) => {
            f.write_str("-")?;
            write_at(f, a, NEG)
        }
        Expr::Add(a, b) => {
            write_at(f, a, ADD)?;
            f.write_str(" + ")?;
            write_at(f, b, MUL)
        }
        Expr::Sub(a, b) => {
            write_at(f, a, ADD)?;
            f.write_str(" - ")?;
            write_at(f, b, MUL)
        }
        Expr::Mul(a, b) => {
            write_at(f, a, MUL)?;
            f.write_str("*")?;
            write_at(f, b, NEG)
        }
        Expr::Div(a, b) => {
            write_at(f, a, MUL)?;
            f.write_str("/")?;
            write_at(f, b, NEG)
        }
        Expr::Pow(a, b) => {
            write_at(f, a, ATOM)?;
            f.write_str("^")?;
            write_at(f, b, NEG)
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(f, a)?;
            f.write_str(")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}
