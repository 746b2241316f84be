//! Symbolic differentiation and the smart constructors that keep results
//! small: constant folding plus `x+0`, `x*1`, `x*0`, `x^1`, `x-x` style
//! identities. Nothing here reorders sums or collects like terms.

use super::{pow_checked, Expr, Func, Var};

fn c(x: f64) -> Expr {
    Expr::Const(x)
}

fn fold(x: f64) -> Option<Expr> {
    x.is_finite().then_some(Expr::Const(x))
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => c(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => c(x + y),
        (a, b) if a.is_zero() => b,
        (a, b) if b.is_zero() => a,
        (a, Expr::Neg(b)) => sub(a, *b),
        (a, Expr::Const(y)) if y < 0.0 => sub(a, c(-y)),
        (Expr::Neg(a), b) => sub(b, *a),
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => c(x - y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => neg(b),
        (a, Expr::Neg(b)) => add(a, *b),
        (a, Expr::Const(y)) if y < 0.0 => add(a, c(-y)),
        (a, b) if a == b => c(0.0),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => c(x * y),
        (a, b) if a.is_zero() || b.is_zero() => c(0.0),
        (Expr::Const(x), b) if x == 1.0 => b,
        (a, Expr::Const(y)) if y == 1.0 => a,
        (Expr::Const(x), b) if x == -1.0 => neg(b),
        (a, Expr::Const(y)) if y == -1.0 => neg(a),
        (Expr::Neg(a), b) => neg(mul(*a, b)),
        (a, Expr::Neg(b)) => neg(mul(a, *b)),
        (a, b @ Expr::Const(_)) if a.as_const().is_none() => mul(b, a),
        (Expr::Const(x), Expr::Mul(l, r)) if l.as_const().is_some() => {
            let y = l.as_const().unwrap_or_default();
            mul(c(x * y), *r)
        }
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 && (x / y).is_finite() => c(x / y),
        (a, b) if a.is_zero() && !b.is_zero() => c(0.0),
        (a, Expr::Const(y)) if y == 1.0 => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(folded) = pow_checked(x, y).ok().and_then(fold) {
            return folded;
        }
    }
    match (a, b) {
        (_, Expr::Const(y)) if y == 0.0 => c(1.0),
        (a, Expr::Const(y)) if y == 1.0 => a,
        (Expr::Const(x), _) if x == 1.0 => c(1.0),
        (a, b) => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn call(f: Func, a: Expr) -> Expr {
    if let Some(x) = a.as_const() {
        if let Some(folded) = f.apply(x).ok().and_then(fold) {
            return folded;
        }
    }
    Expr::Call(f, Box::new(a))
}

pub(super) fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => neg(simplify(a)),
        Expr::Add(a, b) => add(simplify(a), simplify(b)),
        Expr::Sub(a, b) => sub(simplify(a), simplify(b)),
        Expr::Mul(a, b) => mul(simplify(a), simplify(b)),
        Expr::Div(a, b) => div(simplify(a), simplify(b)),
        Expr::Pow(a, b) => pow(simplify(a), simplify(b)),
        Expr::Call(f, a) => call(*f, simplify(a)),
    }
}

pub(super) fn substitute(e: &Expr, var: Var, with: &Expr) -> Expr {
    let s = |x: &Expr| substitute(x, var, with);
    match e {
        Expr::Const(_) => e.clone(),
        Expr::Var(v) if *v == var => with.clone(),
        Expr::Var(_) => e.clone(),
        Expr::Neg(a) => neg(s(a)),
        Expr::Add(a, b) => add(s(a), s(b)),
        Expr::Sub(a, b) => sub(s(a), s(b)),
        Expr::Mul(a, b) => mul(s(a), s(b)),
        Expr::Div(a, b) => div(s(a), s(b)),
        Expr::Pow(a, b) => pow(s(a), s(b)),
        Expr::Call(f, a) => call(*f, s(a)),
    }
}

pub(super) fn diff(e: &Expr, x: Var) -> Expr {
    match e {
        Expr::Const(_) => c(0.0),
        Expr::Var(v) => c(if *v == x { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff(a, x)),
        Expr::Add(a, b) => add(diff(a, x), diff(b, x)),
        Expr::Sub(a, b) => sub(diff(a, x), diff(b, x)),
        Expr::Mul(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            add(mul(diff(&a, x), b.clone()), mul(a.clone(), diff(&b, x)))
        }
        Expr::Div(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            let da = diff(&a, x);
            if !b.depends_on(x) {
                return div(da, b);
            }
            let db = diff(&b, x);
            div(sub(mul(da, b.clone()), mul(a, db)), pow(b, c(2.0)))
        }
        Expr::Pow(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            let da = diff(&a, x);
            if !b.depends_on(x) {
                // c·f^(c−1)·f′
                let lowered = pow(a, sub(b.clone(), c(1.0)));
                return mul(mul(b, lowered), da);
            }
            let db = diff(&b, x);
            let fg = pow(a.clone(), b.clone());
            if !a.depends_on(x) {
                return mul(mul(fg, call(Func::Log, a)), db);
            }
            // d/dx exp(g·log f) = f^g·(g′·log f + g·f′/f)
            let inner = add(mul(db, call(Func::Log, a.clone())), div(mul(b, da), a));
            mul(fg, inner)
        }
        Expr::Call(f, a) => {
            let a = simplify(a);
            let da = diff(&a, x);
            match f {
                Func::Sin => mul(call(Func::Cos, a), da),
                Func::Cos => mul(neg(call(Func::Sin, a)), da),
                Func::Exp => mul(call(Func::Exp, a), da),
                Func::Log => div(da, a),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{print::tests::arb_expr, Expr, Point, Var};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn p(text: &str) -> Expr {
        Expr::parse(text, 2).unwrap()
    }

    #[test]
    fn oscillator_partials() {
        let l = p("0.5*v1^2 - 0.5*q1^2");
        assert_eq!(l.diff(Var::Velocity(0)), p("v1"));
        assert_eq!(l.diff(Var::Coord(0)).to_string(), "-q1");
        assert_eq!(l.diff(Var::Coord(0)), Expr::Neg(Box::new(p("q1"))));
    }

    #[test]
    fn chain_rule() {
        let e = p("sin(q1)*exp(t)");
        assert_eq!(e.diff(Var::Coord(0)), p("cos(q1)*exp(t)"));
    }

    #[test]
    fn absent_variable_gives_zero() {
        for text in ["sin(q1)*exp(t)", "q2^3/t", "log(v1) + P1"] {
            assert_eq!(p(text).diff(Var::NewCoordBar(1)), Expr::Const(0.0));
        }
    }

    #[test]
    fn identities() {
        assert_eq!(p("q1 + 0").simplify(), p("q1"));
        assert_eq!(p("1*q1*1").simplify(), p("q1"));
        assert_eq!(p("0*sin(q1)").simplify(), Expr::Const(0.0));
        assert_eq!(p("q1^1").simplify(), p("q1"));
        assert_eq!(p("2*3 + 4^0.5").simplify(), Expr::Const(8.0));
        assert_eq!(p("q1 - q1").simplify(), Expr::Const(0.0));
        // log(0) is left symbolic rather than folded to -inf
        assert_eq!(p("log(0)").simplify(), p("log(0)"));
    }

    #[test]
    fn substitution() {
        let e = p("0.5*v1^2 - 0.5*q1^2");
        assert_eq!(e.substitute(Var::Velocity(0), &Expr::Const(0.0)).to_string(), "-(0.5*q1^2)");
    }

    fn bindings(rng: &mut impl Rng) -> [f64; 7] {
        std::array::from_fn(|_| rng.random_range(0.2..1.5))
    }

    fn eval_at(e: &Expr, x: &[f64; 7]) -> Option<f64> {
        let pt = Point::at(x[0]).q(&x[1..3]).v(&x[3..5]).new_qbar(&x[5..7]);
        e.eval(&pt).ok().filter(|v| v.is_finite())
    }

    fn check_against_differences(e: &Expr, var: Var, slot: usize, seed: u64) {
        let d = e.diff(var);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let step = 1e-6;
        let mut checked = 0;
        for _ in 0..20 {
            let x = bindings(&mut rng);
            let (mut lo, mut hi) = (x, x);
            lo[slot] -= step;
            hi[slot] += step;
            let (Some(f_lo), Some(f_hi), Some(exact)) = (eval_at(e, &lo), eval_at(e, &hi), eval_at(&d, &x)) else {
                continue;
            };
            let fd = (f_hi - f_lo) / (2.0 * step);
            let scale = exact.abs().max(fd.abs()).max(1.0);
            assert!((fd - exact).abs() <= 1e-6 * scale, "{e} d/d{var}: fd {fd} vs {exact} at {x:?}");
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let cases = [
            "0.5*v1^2 - 0.5*q1^2",
            "sin(q1)*exp(t) + q2/v1",
            "q1^q2 + log(v2*q1)",
            "exp(-t*q1)*cos(3*v1) - v2^2.5",
            "(q1 + t)/(1 + q1^2) + Qbar1*q1",
            "2^q1 + q1^(t + 1)",
        ];
        let slots = [(Var::Time, 0), (Var::Coord(0), 1), (Var::Coord(1), 2), (Var::Velocity(0), 3), (Var::Velocity(1), 4)];
        for (i, text) in cases.iter().enumerate() {
            for (j, &(var, slot)) in slots.iter().enumerate() {
                check_against_differences(&p(text), var, slot, (i * 10 + j) as u64);
            }
        }
    }

    proptest! {
        #[test]
        fn random_expressions_differentiate_consistently(e in arb_expr(), seed in 0u64..1000) {
            let d = e.diff(Var::Coord(0));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = bindings(&mut rng);
            let central = |step: f64| {
                let (mut lo, mut hi) = (x, x);
                lo[1] -= step;
                hi[1] += step;
                Some((eval_at(&e, &lo)?, eval_at(&e, &hi)?, (eval_at(&e, &hi)? - eval_at(&e, &lo)?) / (2.0 * step)))
            };
            if let (Some((f_lo, f_hi, coarse)), Some((_, _, fine)), Some(f0), Some(exact)) =
                (central(2e-6), central(1e-6), eval_at(&e, &x), eval_at(&d, &x))
            {
                // skip steep or near-singular samples where differences lose meaning
                prop_assume!(f_lo.abs().max(f_hi.abs()).max(f0.abs()) < 1e4);
                prop_assume!(fine.abs() < 1e4);
                let fd = (4.0 * fine - coarse) / 3.0;
                let scale = exact.abs().max(1.0);
                let truncation = (fine - coarse).abs();
                prop_assert!((fd - exact).abs() <= 1e-5 * scale + truncation, "{} -> {}: fd {} exact {}", e, d, fd, exact);
            }
        }
    }
}
