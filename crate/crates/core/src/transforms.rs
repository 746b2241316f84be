//! Canonical transformations in the integrated variables `q̄`, `Q̄` and the
//! Hamilton–Jacobi residual.
//!
//! `q̄_i(t) = ∫_a^t ^CD q_i(s) ds`, normalized so that `q̄_i(a) = 0`.

use crate::dynamics::{NodeTable, Trajectory};
use crate::error::{Error, Result};
use crate::expr::{half_quadratic, Expr, Family, Var};
use crate::frac_ops::combined_caputo;
use crate::grid::{classical_derivative, cumulative_integral, GridFn};
use crate::model::{GeneratingFunction, GeneratingKind, HamiltonianSpec};
use crate::report::ResidualReport;

/// Old variables `(q, p)` and new variables `(Q, P)` on one grid with the
/// same orders.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    old: Trajectory,
    new: Trajectory,
}

impl TransformPair {
    pub fn new(old: Trajectory, new: Trajectory) -> Result<Self> {
        if old.grid() != new.grid() {
            return Err(Error::Mismatch("old and new trajectories use different grids".into()));
        }
        if old.dim() != new.dim() {
            return Err(Error::Mismatch(format!("{} old coordinates vs {} new", old.dim(), new.dim())));
        }
        if old.orders() != new.orders() {
            return Err(Error::Mismatch("old and new coordinates must share their fractional orders".into()));
        }
        old.require_p()?;
        new.require_p()?;
        Ok(Self { old, new })
    }

    pub fn old(&self) -> &Trajectory {
        &self.old
    }

    pub fn new_side(&self) -> &Trajectory {
        &self.new
    }

    pub fn dim(&self) -> usize {
        self.old.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarVariables {
    pub qbar: Vec<GridFn>,
    pub new_qbar: Vec<GridFn>,
}

/// `∫_a^t ^CD q_i` for every coordinate of the trajectory.
pub fn bar_of(traj: &Trajectory) -> Result<Vec<GridFn>> {
    traj.q()
        .iter()
        .zip(traj.orders())
        .map(|(q, o)| cumulative_integral(&combined_caputo(q, o)?))
        .collect()
}

pub fn bar_variables(pair: &TransformPair) -> Result<BarVariables> {
    Ok(BarVariables { qbar: bar_of(&pair.old)?, new_qbar: bar_of(&pair.new)? })
}

fn hamiltonian_along(h: &HamiltonianSpec, traj: &Trajectory) -> Result<GridFn> {
    if h.dim() != traj.dim() {
        return Err(Error::Mismatch(format!("Hamiltonian has {} coordinates, trajectory {}", h.dim(), traj.dim())));
    }
    NodeTable::new(*traj.grid())
        .with(Family::Coord, traj.q())
        .with(Family::Momentum, traj.require_p()?)
        .eval(h.body())
}

fn pair_table(pair: &TransformPair, bars: &BarVariables) -> Result<NodeTable> {
    Ok(NodeTable::new(*pair.old.grid())
        .with(Family::CoordBar, &bars.qbar)
        .with(Family::NewCoordBar, &bars.new_qbar)
        .with(Family::NewMomentum, pair.new.require_p()?))
}

fn require_kind(f: &GeneratingFunction, kind: GeneratingKind, dim: usize) -> Result<()> {
    if f.kind() != kind {
        return Err(Error::Mismatch(format!("expected a {kind:?}-kind generating function, got {:?}", f.kind())));
    }
    if f.dim() != dim {
        return Err(Error::Mismatch(format!("generating function has {} coordinates, pair {dim}", f.dim())));
    }
    Ok(())
}

/// `∂F/∂t − (K − H)` along the pair.
fn time_residual(f: &GeneratingFunction, table: &NodeTable, pair: &TransformPair, h: &HamiltonianSpec, k: &HamiltonianSpec) -> Result<GridFn> {
    let df_dt = table.eval(&f.body().diff(Var::Time))?;
    let k_minus_h = hamiltonian_along(k, &pair.new)?.sub(&hamiltonian_along(h, &pair.old)?)?;
    df_dt.sub(&k_minus_h)
}

/// Residuals of a first-kind transformation: `p_i − ∂F1/∂q̄_i`,
/// `−P_i − ∂F1/∂Q̄_i` and `∂F1/∂t − (K − H)`.
pub fn verify_trans1(
    f1: &GeneratingFunction,
    pair: &TransformPair,
    h: &HamiltonianSpec,
    k: &HamiltonianSpec,
    tol: f64,
) -> Result<ResidualReport> {
    require_kind(f1, GeneratingKind::First, pair.dim())?;
    let bars = bar_variables(pair)?;
    let table = pair_table(pair, &bars)?;
    let p = pair.old.require_p()?;
    let big_p = pair.new.require_p()?;
    let mut report = ResidualReport::new("first-kind transformation", tol);
    for i in 0..pair.dim() {
        let df = table.eval(&f1.body().diff(Var::CoordBar(i)))?;
        report.push(format!("p[{}]", i + 1), p[i].sub(&df)?);
    }
    for i in 0..pair.dim() {
        let df = table.eval(&f1.body().diff(Var::NewCoordBar(i)))?;
        report.push(format!("P[{}]", i + 1), big_p[i].map(|x| -x).sub(&df)?);
    }
    report.push("K-H", time_residual(f1, &table, pair, h, k)?);
    Ok(report)
}

/// Residuals of a second-kind transformation: `p_i − ∂F2/∂q̄_i`,
/// `Q̄_i − ∂F2/∂P_i` and `∂F2/∂t − (K − H)`.
pub fn verify_trans2(
    f2: &GeneratingFunction,
    pair: &TransformPair,
    h: &HamiltonianSpec,
    k: &HamiltonianSpec,
    tol: f64,
) -> Result<ResidualReport> {
    require_kind(f2, GeneratingKind::Second, pair.dim())?;
    let bars = bar_variables(pair)?;
    let table = pair_table(pair, &bars)?;
    let p = pair.old.require_p()?;
    let mut report = ResidualReport::new("second-kind transformation", tol);
    for i in 0..pair.dim() {
        let df = table.eval(&f2.body().diff(Var::CoordBar(i)))?;
        report.push(format!("p[{}]", i + 1), p[i].sub(&df)?);
    }
    for i in 0..pair.dim() {
        let df = table.eval(&f2.body().diff(Var::NewMomentum(i)))?;
        report.push(format!("Qbar[{}]", i + 1), bars.new_qbar[i].sub(&df)?);
    }
    report.push("K-H", time_residual(f2, &table, pair, h, k)?);
    Ok(report)
}

/// `dF/dt + Σ P_i ^CD Q_i − K − Σ p_i ^CD q_i + H` with `dF/dt` by finite
/// differences. A second-kind `F2` enters through `F1 = F2 − Σ P_i Q̄_i`.
pub fn gauge_residual(
    f: &GeneratingFunction,
    pair: &TransformPair,
    h: &HamiltonianSpec,
    k: &HamiltonianSpec,
    tol: f64,
) -> Result<ResidualReport> {
    if f.dim() != pair.dim() {
        return Err(Error::Mismatch(format!("generating function has {} coordinates, pair {}", f.dim(), pair.dim())));
    }
    let bars = bar_variables(pair)?;
    let table = pair_table(pair, &bars)?;
    let p = pair.old.require_p()?;
    let big_p = pair.new.require_p()?;
    let mut along = table.eval(f.body())?;
    if f.kind() == GeneratingKind::Second {
        for i in 0..pair.dim() {
            along = along.sub(&big_p[i].mul(&bars.new_qbar[i])?)?;
        }
    }
    let mut r = classical_derivative(&along)?;
    let v = pair.old.velocities()?;
    let big_v = pair.new.velocities()?;
    for i in 0..pair.dim() {
        r = r.add(&big_p[i].mul(&big_v[i])?)?.sub(&p[i].mul(&v[i])?)?;
    }
    r = r.sub(&hamiltonian_along(k, &pair.new)?)?.add(&hamiltonian_along(h, &pair.old)?)?;
    let mut report = ResidualReport::new("gauge relation", tol);
    report.push("gauge", r);
    Ok(report)
}

/// `H(t, q, ∂F2/∂q̄) + ∂F2/∂t` along `traj` with the new momenta held at
/// `new_momenta`.
pub fn hj_residual(
    h: &HamiltonianSpec,
    f2: &GeneratingFunction,
    traj: &Trajectory,
    new_momenta: &[f64],
    tol: f64,
) -> Result<ResidualReport> {
    require_kind(f2, GeneratingKind::Second, traj.dim())?;
    if new_momenta.len() != traj.dim() {
        return Err(Error::Mismatch(format!("{} new momenta for {} coordinates", new_momenta.len(), traj.dim())));
    }
    if let Some(v) = new_momenta.iter().find(|v| !v.is_finite()) {
        return Err(Error::Mismatch(format!("new momentum {v} is not finite")));
    }
    let grid = *traj.grid();
    let qbar = bar_of(traj)?;
    let table = NodeTable::new(grid)
        .with(Family::CoordBar, &qbar)
        .with_constant(Family::NewMomentum, new_momenta);
    let p = (0..traj.dim())
        .map(|i| table.eval(&f2.body().diff(Var::CoordBar(i))))
        .collect::<Result<Vec<_>>>()?;
    let h_val = NodeTable::new(grid).with(Family::Coord, traj.q()).with(Family::Momentum, &p).eval(h.body())?;
    let residual = h_val.add(&table.eval(&f2.body().diff(Var::Time))?)?;
    let mut report = ResidualReport::new("hamilton-jacobi", tol);
    report.push("HJ", residual);
    Ok(report)
}

/// Second-kind generating function obtained from a first-kind one by a
/// Legendre transform in `Q̄`.
///
/// Requires `F1 = ½Q̄ᵀAQ̄ + b(t,q̄)ᵀQ̄ + c(t,q̄)` with constant invertible `A`;
/// then `F2 = −½(P + b)ᵀA⁻¹(P + b) + c`, which agrees with `F1 + Σ P_i Q̄_i`
/// wherever `−P = ∂F1/∂Q̄`.
pub fn second_kind_from_first(f1: &GeneratingFunction) -> Result<GeneratingFunction> {
    if f1.kind() != GeneratingKind::First {
        return Err(Error::Mismatch("expected a first-kind generating function".into()));
    }
    let vars: Vec<Var> = (0..f1.dim()).map(Var::NewCoordBar).collect();
    let form = f1
        .body()
        .quadratic_in(&vars)
        .ok_or_else(|| Error::Mismatch("F1 is not quadratic in Qbar with constant coefficients".into()))?;
    let det = form.hessian.determinant();
    let inv = form.inverse_hessian().ok_or(Error::SingularJacobian { det })?;
    let shifted: Vec<Expr> =
        form.linear.into_iter().enumerate().map(|(i, b)| Expr::var(Var::NewMomentum(i)) + b).collect();
    let body = half_quadratic(&(-inv), &shifted) + form.constant;
    GeneratingFunction::new(GeneratingKind::Second, f1.dim(), body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac_ops::FracOrder;
    use crate::grid::UniformGrid;

    fn order() -> FracOrder {
        FracOrder::new(0.4, 0.6, 0.3).unwrap()
    }

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(0.0, 1.0, n).unwrap()
    }

    fn ham(text: &str) -> HamiltonianSpec {
        HamiltonianSpec::parse(text, vec![order()]).unwrap()
    }

    fn gen(kind: GeneratingKind, text: &str) -> GeneratingFunction {
        GeneratingFunction::parse(kind, 1, text).unwrap()
    }

    fn traj(q: GridFn, p: GridFn) -> Trajectory {
        Trajectory::new(vec![order()], vec![q], Some(vec![p])).unwrap()
    }

    #[test]
    fn bar_of_constant_is_zero() {
        let t = Trajectory::from_fns(grid(32), vec![order()], &[|_| 3.0], None).unwrap();
        assert!(bar_of(&t).unwrap()[0].values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bar_is_linear() {
        let g = grid(64);
        let fs: [fn(f64) -> f64; 3] = [|t| t.sin(), |t| t * t, |t| t.sin() + t * t];
        let bars: Vec<GridFn> = fs
            .iter()
            .map(|f| bar_of(&Trajectory::from_fns(g, vec![order()], &[f], None).unwrap()).unwrap().remove(0))
            .collect();
        let sum = bars[0].add(&bars[1]).unwrap();
        for (a, b) in sum.values().iter().zip(bars[2].values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_rejects_mismatched_orders() {
        let g = grid(16);
        let a = traj(GridFn::zeros(g), GridFn::zeros(g));
        let other = FracOrder::new(0.5, 0.5, 0.5).unwrap();
        let b = Trajectory::new(vec![other], vec![GridFn::zeros(g)], Some(vec![GridFn::zeros(g)])).unwrap();
        assert!(TransformPair::new(a, b).is_err());
    }

    #[test]
    fn zero_generating_function_on_zero_pair() {
        let g = grid(16);
        let z = traj(GridFn::zeros(g), GridFn::zeros(g));
        let pair = TransformPair::new(z.clone(), z).unwrap();
        let f1 = gen(GeneratingKind::First, "0");
        let h = ham("0.5*p1^2 + 0.5*q1^2");
        assert!(verify_trans1(&f1, &pair, &h, &h, 0.0).unwrap().passed());
        assert!(gauge_residual(&f1, &pair, &h, &h, 0.0).unwrap().passed());
    }

    #[test]
    fn constant_shift_in_time() {
        let g = grid(32);
        let old = traj(GridFn::from_fn(g, |t| t.sin()), GridFn::from_fn(g, |t| t.cos()));
        let pair = TransformPair::new(old.clone(), old).unwrap();
        let f2 = gen(GeneratingKind::Second, "qbar1*P1 + t");
        let h = ham("0.5*p1^2 + 0.5*q1^2");
        let k = ham("0.5*p1^2 + 0.5*q1^2 + 1");
        let rep = verify_trans2(&f2, &pair, &h, &k, 1e-12).unwrap();
        assert!(rep.passed(), "{:?}", rep.sup_norm());
        let bad = verify_trans2(&f2, &pair, &h, &h, 1e-12).unwrap();
        assert!((bad.equation("K-H").unwrap().sup_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_transformation() {
        let g = grid(64);
        let c = 2.5;
        let big_q = GridFn::from_fn(g, |t| t * t - 0.3 * t);
        let big_p = GridFn::from_fn(g, |t| (2.0 * t).cos());
        let new = traj(big_q, big_p.clone());
        // Q̄ = c·q̄ holds for q = Q / c by linearity
        let q = new.q()[0].map(|x| x / c);
        let old = traj(q, big_p.map(|x| c * x));
        let pair = TransformPair::new(old, new).unwrap();
        let f2 = gen(GeneratingKind::Second, "2.5*qbar1*P1");
        let h = ham("0.5*p1^2");
        let k = ham("0.5*p1^2*6.25");
        let rep = verify_trans2(&f2, &pair, &h, &k, 1e-12).unwrap();
        assert!(rep.passed(), "{}", rep.sup_norm());
    }

    #[test]
    fn legendre_link_between_kinds() {
        let g = grid(64);
        let q = GridFn::from_fn(g, |t| t.sin());
        let big_q = GridFn::from_fn(g, |t| 1.0 + t * t);
        let tq = Trajectory::new(vec![order()], vec![q.clone()], None).unwrap();
        let tbig = Trajectory::new(vec![order()], vec![big_q.clone()], None).unwrap();
        let qbar = bar_of(&tq).unwrap().remove(0);
        let new_qbar = bar_of(&tbig).unwrap().remove(0);
        // F1 = ½Q̄² + q̄Q̄ + 2t: p = Q̄, P = −(Q̄ + q̄)
        let p = new_qbar.clone();
        let big_p = new_qbar.add(&qbar).unwrap().map(|x| -x);
        let pair = TransformPair::new(traj(q, p), traj(big_q, big_p)).unwrap();
        let f1 = gen(GeneratingKind::First, "0.5*Qbar1^2 + qbar1*Qbar1 + 2*t");
        let h = ham("t");
        let k = ham("t + 2");
        assert!(verify_trans1(&f1, &pair, &h, &k, 1e-12).unwrap().passed());
        let f2 = second_kind_from_first(&f1).unwrap();
        let rep = verify_trans2(&f2, &pair, &h, &k, 1e-12).unwrap();
        assert!(rep.passed(), "{} for {}", rep.sup_norm(), f2.body());
    }

    #[test]
    fn exchange_has_no_second_kind_form() {
        let f1 = gen(GeneratingKind::First, "qbar1*Qbar1");
        assert!(matches!(second_kind_from_first(&f1), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn free_particle_hamilton_jacobi() {
        let g = grid(32);
        let t = Trajectory::from_fns(g, vec![order()], &[|t: f64| (3.0 * t).sin()], None).unwrap();
        let f2 = gen(GeneratingKind::Second, "qbar1*P1 - 0.5*P1^2*t");
        for big_p in [-1.5, 0.0, 0.7] {
            let rep = hj_residual(&ham("0.5*p1^2"), &f2, &t, &[big_p], 0.0).unwrap();
            assert!(rep.passed());
        }
        let shifted = gen(GeneratingKind::Second, "qbar1*P1 - 0.5*P1^2*t + 4");
        assert!(hj_residual(&ham("0.5*p1^2"), &shifted, &t, &[0.7], 0.0).unwrap().passed());
    }

    #[test]
    fn hamilton_jacobi_negative_controls() {
        let g = grid(32);
        let t = Trajectory::from_fns(g, vec![order()], &[|t: f64| 1.0 + t], None).unwrap();
        let f2 = gen(GeneratingKind::Second, "qbar1*P1 - 0.5*P1^2*t");
        let rep = hj_residual(&ham("0.5*p1^2 + 0.5*q1^2"), &f2, &t, &[1.0], 1e-3).unwrap();
        let r = &rep.equations[0].residual;
        for (k, x) in g.nodes().into_iter().enumerate() {
            assert!((r.values()[k] - 0.5 * (1.0 + x).powi(2)).abs() < 1e-14);
        }
        assert!(!rep.passed());

        let plain = gen(GeneratingKind::Second, "qbar1*P1");
        let rep = hj_residual(&ham("0.5*p1^2"), &plain, &t, &[2.0], 1e-3).unwrap();
        assert!((rep.sup_norm() - 2.0).abs() < 1e-14);
        assert!(hj_residual(&ham("0.5*p1^2"), &plain, &t, &[0.0], 1e-3).unwrap().passed());
    }

    #[test]
    fn kinds_are_checked() {
        let g = grid(16);
        let z = traj(GridFn::zeros(g), GridFn::zeros(g));
        let pair = TransformPair::new(z.clone(), z.clone()).unwrap();
        let f2 = gen(GeneratingKind::Second, "qbar1*P1");
        let h = ham("0.5*p1^2");
        assert!(verify_trans1(&f2, &pair, &h, &h, 1.0).is_err());
        let f1 = gen(GeneratingKind::First, "qbar1*Qbar1");
        assert!(hj_residual(&h, &f1, &z, &[0.0], 1.0).is_err());
    }
}
