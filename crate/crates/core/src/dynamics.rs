//! Momenta, the Legendre transform, and residuals of the Euler–Lagrange and
//! canonical equations along sampled trajectories.
//!
//! Residual sign convention: left-hand side minus right-hand side of each
//! equation as written, e.g. `r1_i = ∂H/∂p_i − ^CD q_i` and
//! `r2_i = ∂H/∂q_i − D p_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Expr, Family, Point, QuadraticForm, Var};
use crate::frac_ops::{combined_caputo, combined_rl, FracOrder};
use crate::grid::{classical_derivative, GridFn, UniformGrid};
use crate::model::{HamiltonianSpec, LagrangianSpec};
use crate::report::ResidualReport;

/// Coordinates (and optionally momenta) sampled on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: UniformGrid,
    q: Vec<GridFn>,
    p: Option<Vec<GridFn>>,
    orders: Vec<FracOrder>,
}

impl Trajectory {
    pub fn new(orders: Vec<FracOrder>, q: Vec<GridFn>, p: Option<Vec<GridFn>>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Mismatch("trajectory needs at least one coordinate".into()));
        }
        if orders.len() != q.len() {
            return Err(Error::Mismatch(format!("{} orders for {} coordinates", orders.len(), q.len())));
        }
        let grid = *q[0].grid();
        for f in q.iter().chain(p.iter().flatten()) {
            if *f.grid() != grid {
                return Err(Error::Mismatch("trajectory components live on different grids".into()));
            }
            f.require_valid()?;
        }
        if let Some(p) = &p {
            if p.len() != q.len() {
                return Err(Error::Mismatch(format!("{} momenta for {} coordinates", p.len(), q.len())));
            }
        }
        Ok(Self { grid, q, p, orders })
    }

    /// Builds a trajectory from closures, one per coordinate.
    pub fn from_fns<F: Fn(f64) -> f64>(grid: UniformGrid, orders: Vec<FracOrder>, q: &[F], p: Option<&[F]>) -> Result<Self> {
        let q = q.iter().map(|f| GridFn::from_fn(grid, f)).collect();
        let p = p.map(|p| p.iter().map(|f| GridFn::from_fn(grid, f)).collect());
        Self::new(orders, q, p)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[GridFn] {
        &self.q
    }

    pub fn p(&self) -> Option<&[GridFn]> {
        self.p.as_deref()
    }

    pub fn orders(&self) -> &[FracOrder] {
        &self.orders
    }

    pub fn with_momenta(mut self, p: Vec<GridFn>) -> Result<Self> {
        self.p = Some(p);
        Self::new(self.orders, self.q, self.p)
    }

    pub(crate) fn require_p(&self) -> Result<&[GridFn]> {
        self.p().ok_or_else(|| Error::Mismatch("trajectory has no momenta".into()))
    }

    pub(crate) fn check_orders(&self, orders: &[FracOrder]) -> Result<()> {
        if orders != self.orders.as_slice() {
            return Err(Error::Mismatch(format!(
                "trajectory orders {:?} differ from model orders {:?}",
                self.orders, orders
            )));
        }
        Ok(())
    }

    /// Combined Caputo derivative of every coordinate.
    pub fn velocities(&self) -> Result<Vec<GridFn>> {
        self.q.iter().zip(&self.orders).map(|(q, o)| combined_caputo(q, o)).collect()
    }
}

/// Node-major table of variable values, for evaluating expressions along a
/// trajectory.
#[derive(Debug, Default)]
pub(crate) struct NodeTable {
    t: Vec<f64>,
    q: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    new_p: Vec<Vec<f64>>,
    qbar: Vec<Vec<f64>>,
    new_qbar: Vec<Vec<f64>>,
    grid: Option<UniformGrid>,
}

fn transpose(fns: &[GridFn]) -> Vec<Vec<f64>> {
    let len = fns.first().map_or(0, |f| f.len());
    (0..len).map(|k| fns.iter().map(|f| f.values()[k]).collect()).collect()
}

impl NodeTable {
    pub(crate) fn new(grid: UniformGrid) -> Self {
        Self { t: grid.nodes(), grid: Some(grid), ..Default::default() }
    }

    pub(crate) fn with(mut self, family: Family, fns: &[GridFn]) -> Self {
        let rows = transpose(fns);
        match family {
            Family::Time => {}
            Family::Coord => self.q = rows,
            Family::Velocity => self.v = rows,
            Family::Momentum => self.p = rows,
            Family::NewMomentum => self.new_p = rows,
            Family::CoordBar => self.qbar = rows,
            Family::NewCoordBar => self.new_qbar = rows,
        }
        self
    }

    /// The same constant values at every node.
    pub(crate) fn with_constant(mut self, family: Family, values: &[f64]) -> Self {
        let rows = vec![values.to_vec(); self.t.len()];
        match family {
            Family::NewMomentum => self.new_p = rows,
            Family::Momentum => self.p = rows,
            _ => unimplemented!("constant bindings are only used for momenta"),
        }
        self
    }

    fn row(rows: &[Vec<f64>], k: usize) -> &[f64] {
        rows.get(k).map_or(&[], |r| r.as_slice())
    }

    pub(crate) fn point(&self, k: usize) -> Point<'_> {
        Point::at(self.t[k])
            .q(Self::row(&self.q, k))
            .v(Self::row(&self.v, k))
            .p(Self::row(&self.p, k))
            .new_p(Self::row(&self.new_p, k))
            .qbar(Self::row(&self.qbar, k))
            .new_qbar(Self::row(&self.new_qbar, k))
    }

    pub(crate) fn eval(&self, e: &Expr) -> Result<GridFn> {
        let grid = self.grid.expect("node table built without a grid");
        let values = (0..self.t.len())
            .map(|k| e.eval(&self.point(k)).map_err(|source| Error::EvalAt { node: k, source }))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidNode { node: k });
        }
        GridFn::new(grid, values)
    }
}

/// Default tolerance for discretization-limited residuals:
/// `10·h^{min(2−α*, 2−β*)}` with α*, β* the largest orders present.
pub fn discretization_tolerance(grid: &UniformGrid, orders: &[FracOrder]) -> f64 {
    let a = orders.iter().map(|o| o.alpha()).fold(0.0, f64::max);
    let b = orders.iter().map(|o| o.beta()).fold(0.0, f64::max);
    10.0 * grid.h().powf((2.0 - a).min(2.0 - b))
}

/// Tolerance for identities that hold exactly up to rounding.
pub const ALGEBRAIC_TOLERANCE: f64 = 1e-10;

/// `p_i = ∂L/∂v_i` evaluated at `v = ^CD q` along the trajectory.
pub fn momenta(l: &LagrangianSpec, traj: &Trajectory) -> Result<Vec<GridFn>> {
    traj.check_orders(l.orders())?;
    let v = traj.velocities()?;
    let table = NodeTable::new(traj.grid).with(Family::Coord, &traj.q).with(Family::Velocity, &v);
    l.velocity_vars().into_iter().map(|vi| table.eval(&l.body().diff(vi))).collect()
}

/// Solution of the momentum relations at one phase-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint {
    pub hamiltonian: f64,
    pub velocity: Vec<f64>,
    pub iterations: usize,
}

/// Reusable Legendre map: symbolic first and second `v`-partials of `L`.
#[derive(Debug, Clone)]
pub struct LegendreMap {
    lagrangian: LagrangianSpec,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

const LEGENDRE_MAX_ITER: usize = 50;
const LEGENDRE_MAX_HALVINGS: usize = 30;

impl LegendreMap {
    pub fn new(l: &LagrangianSpec) -> Self {
        let vars = l.velocity_vars();
        let grad: Vec<Expr> = vars.iter().map(|&v| l.body().diff(v)).collect();
        let hess = grad.iter().map(|g| vars.iter().map(|&v| g.diff(v)).collect()).collect();
        Self { lagrangian: l.clone(), grad, hess }
    }

    fn residual(&self, t: f64, q: &[f64], v: &[f64], p: &[f64]) -> Result<DVector<f64>> {
        let pt = Point::at(t).q(q).v(v);
        let r = self.grad.iter().zip(p).map(|(g, pi)| Ok(g.eval(&pt)? - pi)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(r))
    }

    /// Newton solve of `p = ∂L/∂v(t, q, v)` for `v`, started at `v = p`.
    pub fn solve(&self, t: f64, q: &[f64], p: &[f64]) -> Result<LegendrePoint> {
        let n = self.lagrangian.dim();
        if q.len() != n || p.len() != n {
            return Err(Error::Mismatch(format!("expected {n} coordinates and momenta")));
        }
        let mut v = p.to_vec();
        let scale = 1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut r = self.residual(t, q, &v, p)?;
        for iter in 0..=LEGENDRE_MAX_ITER {
            let pt = Point::at(t).q(q).v(&v);
            let mut jac = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] = self.hess[i][j].eval(&pt)?;
                }
            }
            let det = jac.determinant();
            if det.abs() < 1e-10 {
                return Err(Error::SingularJacobian { det });
            }
            if r.amax() <= 1e-12 * scale {
                let lag = self.lagrangian.body().eval(&pt)?;
                let h = p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() - lag;
                return Ok(LegendrePoint { hamiltonian: h, velocity: v, iterations: iter });
            }
            if iter == LEGENDRE_MAX_ITER {
                break;
            }
            let step = jac.lu().solve(&r).ok_or(Error::SingularJacobian { det })?;
            let norm0 = r.norm();
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..LEGENDRE_MAX_HALVINGS {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
                if let Ok(rt) = self.residual(t, q, &trial, p) {
                    if rt.norm() < norm0 {
                        v = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NoConvergence { iterations: LEGENDRE_MAX_ITER, norm: r.amax() })
    }
}

/// `H = Σ p_i v_i − L` with `v` solved from the momentum relations.
pub fn legendre_pointwise(l: &LagrangianSpec, t: f64, q: &[f64], p: &[f64]) -> Result<LegendrePoint> {
    LegendreMap::new(l).solve(t, q, p)
}

/// Closed-form Hamiltonian for Lagrangians quadratic in `v` with a constant,
/// invertible `v`-Hessian; `None` otherwise.
///
/// With `L = ½vᵀAv + b(t,q)ᵀv + c(t,q)` the result is
/// `H = ½(p − b)ᵀA⁻¹(p − b) − c`.
pub fn hamiltonian_symbolic(l: &LagrangianSpec) -> Option<HamiltonianSpec> {
    let form = l.body().quadratic_in(&l.velocity_vars())?;
    let m = form.inverse_hessian()?;
    let QuadraticForm { linear, constant, .. } = form;
    let shifted: Vec<Expr> =
        linear.into_iter().enumerate().map(|(i, b)| Expr::var(Var::Momentum(i)) - b).collect();
    let body = crate::expr::half_quadratic(&m, &shifted) - constant;
    HamiltonianSpec::new(l.orders().to_vec(), body).ok()
}

/// Euler–Lagrange residuals `∂L/∂q_i + D^{β_i,α_i}_{1−γ_i} ∂L/∂v_i`.
pub fn el_residual(l: &LagrangianSpec, traj: &Trajectory, tol: f64) -> Result<ResidualReport> {
    traj.check_orders(l.orders())?;
    let v = traj.velocities()?;
    let table = NodeTable::new(traj.grid).with(Family::Coord, &traj.q).with(Family::Velocity, &v);
    let mut report = ResidualReport::new("euler-lagrange", tol);
    for (i, o) in l.orders().iter().enumerate() {
        let dl_dq = table.eval(&l.body().diff(Var::Coord(i)))?;
        let p = table.eval(&l.body().diff(Var::Velocity(i)))?;
        let residual = dl_dq.add(&combined_rl(&p, o)?)?;
        report.push(format!("EL[{}]", i + 1), residual);
    }
    Ok(report)
}

/// Canonical-equation residuals `r1_i = ∂H/∂p_i − ^CD q_i`,
/// `r2_i = ∂H/∂q_i − D p_i`.
pub fn canonical_residual(h: &HamiltonianSpec, traj: &Trajectory, tol: f64) -> Result<ResidualReport> {
    traj.check_orders(h.orders())?;
    let p = traj.require_p()?;
    let v = traj.velocities()?;
    let table = NodeTable::new(traj.grid).with(Family::Coord, &traj.q).with(Family::Momentum, p);
    let mut report = ResidualReport::new("canonical", tol);
    for (i, o) in h.orders().iter().enumerate() {
        let dh_dp = table.eval(&h.body().diff(Var::Momentum(i)))?;
        let dh_dq = table.eval(&h.body().diff(Var::Coord(i)))?;
        report.push(format!("r1[{}]", i + 1), dh_dp.sub(&v[i])?);
        report.push(format!("r2[{}]", i + 1), dh_dq.sub(&combined_rl(&p[i], o)?)?);
    }
    Ok(report)
}

/// A point `(t, q, p)` of extended phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// `max |∂H/∂t + ∂L/∂t|` over the samples, with `v` from the Legendre map.
pub fn partial_t_check(l: &LagrangianSpec, h: &HamiltonianSpec, samples: &[PhasePoint]) -> Result<f64> {
    if l.dim() != h.dim() || l.orders() != h.orders() {
        return Err(Error::Mismatch("Lagrangian and Hamiltonian disagree on coordinates or orders".into()));
    }
    let legendre = LegendreMap::new(l);
    let dl_dt = l.body().diff(Var::Time);
    let dh_dt = h.body().diff(Var::Time);
    let mut worst: f64 = 0.0;
    for s in samples {
        let v = legendre.solve(s.t, &s.q, &s.p)?.velocity;
        let lt = dl_dt.eval(&Point::at(s.t).q(&s.q).v(&v))?;
        let ht = dh_dt.eval(&Point::at(s.t).q(&s.q).p(&s.p))?;
        worst = worst.max((ht + lt).abs());
    }
    Ok(worst)
}

/// The three terms of the energy balance `dH/dt = exchange + ∂H/∂t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    /// `d/dt H(t, q(t), p(t))` by finite differences.
    pub total: GridFn,
    /// `Σ (^CD q_i · dp_i/dt + D p_i · dq_i/dt)`; vanishes only for integer order.
    pub exchange: GridFn,
    /// `∂H/∂t` sampled along the trajectory.
    pub explicit: GridFn,
}

impl EnergyBalance {
    /// `total − exchange − explicit`; small wherever the canonical equations hold.
    pub fn imbalance(&self) -> Result<GridFn> {
        self.total.sub(&self.exchange)?.sub(&self.explicit)
    }
}

#[allow(non_snake_case)]
pub fn dH_dt_diagnostic(h: &HamiltonianSpec, traj: &Trajectory) -> Result<EnergyBalance> {
    traj.check_orders(h.orders())?;
    let p = traj.require_p()?;
    let v = traj.velocities()?;
    let table = NodeTable::new(traj.grid).with(Family::Coord, &traj.q).with(Family::Momentum, p);
    let total = classical_derivative(&table.eval(h.body())?)?;
    let explicit = table.eval(&h.body().diff(Var::Time))?;
    let mut exchange = GridFn::zeros(traj.grid);
    for (i, o) in traj.orders.iter().enumerate() {
        let dp = classical_derivative(&p[i])?;
        let dq = classical_derivative(&traj.q[i])?;
        let term = v[i].mul(&dp)?.add(&combined_rl(&p[i], o)?.mul(&dq)?)?;
        exchange = exchange.add(&term)?;
    }
    Ok(EnergyBalance { total, exchange, explicit })
}

fn check_phase_vocabulary(c: &Expr, n: usize) -> Result<()> {
    let ok = [Family::Time, Family::Coord, Family::Momentum];
    match c.variables().into_iter().find(|v| !ok.contains(&v.family()) || v.index().is_some_and(|i| i >= n)) {
        Some(v) => Err(Error::ForbiddenVariable { allowed: "t, q<k>, p<k>".into(), found: v.to_string() }),
        None => Ok(()),
    }
}

/// Applies `D^{β,α}_{1−γ}` to `t ↦ C(t, q(t), p(t))` and tests it for zero.
///
/// The verdict is only meaningful along solutions of the canonical equations.
/// When `hamiltonian` is given, the trajectory is checked against it at the
/// same tolerance; if it fails, or no Hamiltonian is given, the report is
/// marked advisory.
pub fn is_constant_of_motion(
    c: &Expr,
    traj: &Trajectory,
    order: &FracOrder,
    tol: f64,
    hamiltonian: Option<&HamiltonianSpec>,
) -> Result<ResidualReport> {
    check_phase_vocabulary(c, traj.dim())?;
    let p = traj.require_p()?;
    let table = NodeTable::new(traj.grid).with(Family::Coord, &traj.q).with(Family::Momentum, p);
    let along = table.eval(c)?;
    let mut report = ResidualReport::new(format!("constant of motion {c}"), tol);
    report.push(format!("D[{c}]"), combined_rl(&along, order)?);
    match hamiltonian {
        Some(h) => {
            let canon = canonical_residual(h, traj, tol)?;
            if !canon.passed() {
                report.advisory = true;
                report.notes.push(format!(
                    "trajectory fails the canonical equations (sup residual {:.3e} > {:.3e})",
                    canon.sup_norm(),
                    tol
                ));
            }
        }
        None => {
            report.advisory = true;
            report.notes.push("trajectory not verified against the canonical equations".into());
        }
    }
    Ok(report)
}

/// For a cyclic coordinate (`∂L/∂q_i ≡ 0`), checks `D^{β_i,α_i}_{1−γ_i} p_i ≡ 0`.
pub fn cyclic_momentum_check(l: &LagrangianSpec, traj: &Trajectory, index: usize, tol: f64) -> Result<ResidualReport> {
    if index >= l.dim() {
        return Err(Error::Mismatch(format!("coordinate {} out of range 1..={}", index + 1, l.dim())));
    }
    let dl_dq = l.body().diff(Var::Coord(index)).simplify();
    if !dl_dq.is_zero() {
        return Err(Error::NotCyclic { index: index + 1, derivative: dl_dq.to_string() });
    }
    let p = momenta(l, traj)?;
    let mut report = ResidualReport::new(format!("cyclic momentum p{}", index + 1), tol);
    report.push(format!("D[p{}]", index + 1), combined_rl(&p[index], &l.orders()[index])?);
    Ok(report)
}
