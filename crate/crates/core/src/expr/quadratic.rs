use nalgebra::DMatrix;

use super::diff::{add, mul, pow};
use super::{Expr, Var};

/// `f(x) = ½·xᵀ·A·x + b(·)ᵀ·x + c(·)` with constant `A`; `b` and `c` may depend
/// on variables other than `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub linear: Vec<Expr>,
    pub constant: Expr,
}

/// Hessians with `|det|` below this count as singular.
pub const SINGULAR_DET: f64 = 1e-10;

impl QuadraticForm {
    /// `A⁻¹`, or `None` when `A` is singular.
    pub fn inverse_hessian(&self) -> Option<DMatrix<f64>> {
        if self.hessian.determinant().abs() < SINGULAR_DET {
            return None;
        }
        self.hessian.clone().try_inverse()
    }
}

pub(super) fn quadratic_in(e: &Expr, vars: &[Var]) -> Option<QuadraticForm> {
    let n = vars.len();
    let grads: Vec<Expr> = vars.iter().map(|&x| e.diff(x)).collect();
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            hessian[(i, j)] = grads[i].diff(vars[j]).as_const()?;
        }
    }
    let at_zero = |f: &Expr| vars.iter().fold(f.clone(), |acc, &x| acc.substitute(x, &Expr::Const(0.0)));
    let linear = grads.iter().map(at_zero).collect();
    let constant = at_zero(e);
    Some(QuadraticForm { hessian, linear, constant })
}

/// `½·yᵀ·M·y` for symmetric `M`, written term by term and skipping zeros.
pub(crate) fn half_quadratic(m: &DMatrix<f64>, y: &[Expr]) -> Expr {
    let n = y.len();
    let mut terms = Vec::new();
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            terms.push(mul(Expr::Const(0.5 * m[(i, i)]), pow(y[i].clone(), Expr::Const(2.0))));
        }
        for j in i + 1..n {
            let mij = 0.5 * (m[(i, j)] + m[(j, i)]);
            if mij != 0.0 {
                terms.push(mul(Expr::Const(mij), mul(y[i].clone(), y[j].clone())));
            }
        }
    }
    terms.into_iter().fold(Expr::Const(0.0), add)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_quadratic_structure() {
        let e = Expr::parse("0.5*v1^2 + 2*v1*v2 + 3*v2^2 + sin(q1)*v1 - q1^2", 2).unwrap();
        let form = e.quadratic_in(&[Var::Velocity(0), Var::Velocity(1)]).unwrap();
        assert_eq!(form.hessian, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 6.0]));
        assert_eq!(form.linear[0], Expr::parse("sin(q1)", 2).unwrap());
        assert!(form.linear[1].is_zero());
        assert_eq!(form.constant.to_string(), "-q1^2");
    }

    #[test]
    fn rejects_non_quadratic() {
        let e = Expr::parse("exp(v1)", 1).unwrap();
        assert!(e.quadratic_in(&[Var::Velocity(0)]).is_none());
        let e = Expr::parse("v1^3", 1).unwrap();
        assert!(e.quadratic_in(&[Var::Velocity(0)]).is_none());
    }

    #[test]
    fn singular_hessian_has_no_inverse() {
        let e = Expr::parse("v1 + q1", 1).unwrap();
        let form = e.quadratic_in(&[Var::Velocity(0)]).unwrap();
        assert!(form.inverse_hessian().is_none());
    }
}
