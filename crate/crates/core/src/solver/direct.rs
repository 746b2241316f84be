use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bfgs, check_dims, BoundaryData, Method, SolveSummary, Solution, SolverConfig};
use crate::dynamics::{discretization_tolerance, el_residual, momenta, NodeTable, Trajectory};
use crate::error::{Error, Result};
use crate::expr::{Expr, Family, Point, Var};
use crate::frac_ops::combined_caputo_matrix;
use crate::grid::{cumulative_integral_logged, GridFn, UniformGrid};
use crate::model::LagrangianSpec;

/// Trapezoid quadrature of `L(t, q, ^CD q)` along the trajectory.
pub fn discrete_action(l: &LagrangianSpec, traj: &Trajectory) -> Result<f64> {
    traj.check_orders(l.orders())?;
    let v = traj.velocities()?;
    let integrand = NodeTable::new(*traj.grid())
        .with(Family::Coord, traj.q())
        .with(Family::Velocity, &v)
        .eval(l.body())?;
    let integral = cumulative_integral_logged(&integrand)?.integral;
    Ok(integral.values()[traj.grid().n()])
}

/// The discrete action as a function of the interior node values, with
/// exact gradient.
///
/// Unknowns are laid out coordinate by coordinate: `x[i·(n−1) + k − 1] = q_i(t_k)`
/// for `k = 1..n−1`.
#[derive(Debug, Clone)]
pub struct DiscreteAction {
    lagrangian: LagrangianSpec,
    grid: UniformGrid,
    bd: BoundaryData,
    weights: DVector<f64>,
    operators: Vec<DMatrix<f64>>,
    dl_dq: Vec<Expr>,
    dl_dv: Vec<Expr>,
    // second partials indexed [i][j]: ∂²L/∂q_i∂q_j, ∂²L/∂q_i∂v_j, ∂²L/∂v_i∂v_j
    l_qq: Vec<Vec<Expr>>,
    l_qv: Vec<Vec<Expr>>,
    l_vv: Vec<Vec<Expr>>,
}

impl DiscreteAction {
    pub fn new(l: &LagrangianSpec, grid: UniformGrid, bd: BoundaryData) -> Result<Self> {
        if bd.dim() != l.dim() {
            return Err(Error::Mismatch(format!("boundary data for {} coordinates, Lagrangian has {}", bd.dim(), l.dim())));
        }
        let operators = l.orders().iter().map(|o| combined_caputo_matrix(&grid, o)).collect::<Result<_>>()?;
        let dim = l.dim();
        let dl_dq: Vec<Expr> = (0..dim).map(|i| l.body().diff(Var::Coord(i))).collect();
        let dl_dv: Vec<Expr> = (0..dim).map(|i| l.body().diff(Var::Velocity(i))).collect();
        let second = |a: &[Expr], f: fn(usize) -> Var| -> Vec<Vec<Expr>> {
            a.iter().map(|e| (0..dim).map(|j| e.diff(f(j))).collect()).collect()
        };
        Ok(Self {
            weights: DVector::from_vec(grid.trapezoid_weights()),
            l_qq: second(&dl_dq, Var::Coord),
            l_qv: second(&dl_dq, Var::Velocity),
            l_vv: second(&dl_dv, Var::Velocity),
            dl_dq,
            dl_dv,
            lagrangian: l.clone(),
            grid,
            bd,
            operators,
        })
    }

    /// Number of unknowns, `N·(n−1)`.
    pub fn len(&self) -> usize {
        self.lagrangian.dim() * (self.grid.n() - 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn full_q(&self, x: &[f64]) -> Vec<DVector<f64>> {
        let n = self.grid.n();
        (0..self.lagrangian.dim())
            .map(|i| {
                let mut q = DVector::zeros(n + 1);
                q[0] = self.bd.qa()[i];
                q[n] = self.bd.qb()[i];
                q.rows_mut(1, n - 1).copy_from_slice(&x[i * (n - 1)..(i + 1) * (n - 1)]);
                q
            })
            .collect()
    }

    pub(crate) fn pack(&self, q: &[Vec<f64>]) -> Vec<f64> {
        let n = self.grid.n();
        q.iter().flat_map(|qi| qi[1..n].iter().copied()).collect()
    }

    pub fn trajectory(&self, x: &[f64]) -> Result<Trajectory> {
        let q = self.full_q(x).into_iter().map(|q| GridFn::new(self.grid, q.as_slice().to_vec())).collect::<Result<_>>()?;
        Trajectory::new(self.lagrangian.orders().to_vec(), q, None)
    }

    /// Action value and its gradient with respect to the unknowns.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.len() {
            return Err(Error::Mismatch(format!("expected {} unknowns, got {}", self.len(), x.len())));
        }
        let dim = self.lagrangian.dim();
        let n = self.grid.n();
        let q = self.full_q(x);
        let v: Vec<DVector<f64>> = q.iter().zip(&self.operators).map(|(q, c)| c * q).collect();
        let mut action = 0.0;
        let mut lq = vec![DVector::zeros(n + 1); dim];
        let mut wlv = vec![DVector::zeros(n + 1); dim];
        let mut qk = vec![0.0; dim];
        let mut vk = vec![0.0; dim];
        for k in 0..=n {
            for i in 0..dim {
                qk[i] = q[i][k];
                vk[i] = v[i][k];
            }
            let pt = Point::at(self.grid.node(k)).q(&qk).v(&vk);
            let at = |e: &Expr| e.eval(&pt).map_err(|source| Error::EvalAt { node: k, source });
            let w = self.weights[k];
            action += w * at(self.lagrangian.body())?;
            for i in 0..dim {
                lq[i][k] = at(&self.dl_dq[i])?;
                wlv[i][k] = w * at(&self.dl_dv[i])?;
            }
        }
        let mut grad = Vec::with_capacity(self.len());
        for i in 0..dim {
            let full = self.operators[i].tr_mul(&wlv[i]) + lq[i].component_mul(&self.weights);
            grad.extend_from_slice(&full.as_slice()[1..n]);
        }
        Ok((action, grad))
    }

    /// Hessian of the action with respect to the unknowns.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let dim = self.lagrangian.dim();
        let n = self.grid.n();
        let q = self.full_q(x);
        let v: Vec<DVector<f64>> = q.iter().zip(&self.operators).map(|(q, c)| c * q).collect();
        // weighted second partials per node, [i][j] -> diagonal vectors
        let zero = || vec![vec![DVector::<f64>::zeros(n + 1); dim]; dim];
        let (mut qq, mut qv, mut vv) = (zero(), zero(), zero());
        let mut qk = vec![0.0; dim];
        let mut vk = vec![0.0; dim];
        for k in 0..=n {
            for i in 0..dim {
                qk[i] = q[i][k];
                vk[i] = v[i][k];
            }
            let pt = Point::at(self.grid.node(k)).q(&qk).v(&vk);
            let at = |e: &Expr| e.eval(&pt).map_err(|source| Error::EvalAt { node: k, source });
            let w = self.weights[k];
            for i in 0..dim {
                for j in 0..dim {
                    qq[i][j][k] = w * at(&self.l_qq[i][j])?;
                    qv[i][j][k] = w * at(&self.l_qv[i][j])?;
                    vv[i][j][k] = w * at(&self.l_vv[i][j])?;
                }
            }
        }
        let m = n - 1;
        let mut hess = DMatrix::zeros(self.len(), self.len());
        for i in 0..dim {
            for j in 0..dim {
                let (ci, cj) = (&self.operators[i], &self.operators[j]);
                let mut block = DMatrix::from_diagonal(&qq[i][j]);
                block += DMatrix::from_diagonal(&qv[i][j]) * cj;
                block += ci.transpose() * DMatrix::from_diagonal(&qv[j][i]);
                block += ci.transpose() * DMatrix::from_diagonal(&vv[i][j]) * cj;
                hess.view_mut((i * m, j * m), (m, m)).copy_from(&block.view((1, 1), (m, m)));
            }
        }
        Ok(hess)
    }

    /// Quadrature weight of each unknown.
    fn scale(&self) -> DVector<f64> {
        let n = self.grid.n();
        DVector::from_iterator(self.len(), (0..self.len()).map(|j| self.weights[1 + j % (n - 1)]))
    }

    fn minimize(&self, x0: Vec<f64>, cfg: &SolverConfig) -> Result<bfgs::Outcome> {
        let obj = |x: &DVector<f64>| {
            let (f, g) = self.evaluate(x.as_slice())?;
            Ok((f, DVector::from_vec(g)))
        };
        bfgs::minimize(obj, DVector::from_vec(x0), &self.scale(), cfg.max_iterations, cfg.gradient_tolerance)
    }

    /// Damped Newton on `∇S = 0` with merit `‖∇S‖₂`; finds saddle points too.
    fn stationary_point(&self, x0: Vec<f64>, cfg: &SolverConfig) -> Result<Stationary> {
        let scale = self.scale();
        let mut x = DVector::from_vec(x0);
        let (mut f, g) = self.evaluate(x.as_slice())?;
        let mut g = DVector::from_vec(g);
        let mut history = vec![f];
        let mut iterations = 0;
        loop {
            let gn = g.iter().zip(scale.iter()).fold(0.0f64, |m, (a, w)| m.max(a.abs() / w));
            if gn <= cfg.gradient_tolerance {
                return Ok(Stationary { x, iterations, scaled_gradient: gn, history, saddle: false });
            }
            if iterations == cfg.max_iterations {
                return Err(Error::NoConvergence { iterations, norm: gn });
            }
            let hess = self.hessian(x.as_slice())?;
            let det = hess.determinant();
            let step = hess.lu().solve(&g).ok_or(Error::SingularJacobian { det })?;
            let norm0 = g.norm();
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let xt = &x - lambda * &step;
                if let Ok((ft, gt)) = self.evaluate(xt.as_slice()) {
                    let gt = DVector::from_vec(gt);
                    if ft.is_finite() && gt.norm() < norm0 {
                        x = xt;
                        f = ft;
                        g = gt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(Error::LineSearch(format!("Newton step on the action gradient stalls (scaled gradient {gn:.3e})")));
            }
            iterations += 1;
            history.push(f);
        }
    }

    /// BFGS minimization, falling back to a Newton stationary-point solve when
    /// the action shows negative curvature.
    fn solve_from(&self, x0: Vec<f64>, cfg: &SolverConfig) -> Result<Stationary> {
        let out = self.minimize(x0.clone(), cfg)?;
        if !out.negative_curvature {
            return Ok(Stationary {
                x: out.x,
                iterations: out.iterations,
                scaled_gradient: out.scaled_gradient,
                history: out.history,
                saddle: false,
            });
        }
        log::debug!("negative curvature after {} BFGS steps; switching to Newton", out.iterations);
        let mut st = self.stationary_point(x0, cfg)?;
        st.iterations += out.iterations;
        st.saddle = true;
        Ok(st)
    }
}

struct Stationary {
    x: DVector<f64>,
    iterations: usize,
    scaled_gradient: f64,
    history: Vec<f64>,
    saddle: bool,
}

/// Minimizes the discrete action over interior node values with the
/// endpoints fixed, then fills in momenta and audits the Euler–Lagrange
/// equations.
pub fn solve_trajectory(l: &LagrangianSpec, bd: &BoundaryData, grid: UniformGrid, cfg: &SolverConfig) -> Result<Solution> {
    check_dims(bd, l.dim(), cfg)?;
    let action = DiscreteAction::new(l, grid, bd.clone())?;
    let start = cfg.starting_values(&grid, bd)?;
    let x0 = action.pack(&start);
    let out = action.solve_from(x0.clone(), cfg)?;
    log::debug!("direct solve: {} iterations, scaled gradient {:.3e}", out.iterations, out.scaled_gradient);

    let mut notes = Vec::new();
    if out.saddle {
        notes.push("the discrete action has negative curvature; the result is a stationary point found by Newton, not a minimizer".into());
    }
    let restart_disagreement = if cfg.restarts > 0 {
        let amplitude = 0.1 * (1.0 + bd.qa().iter().chain(bd.qb()).fold(0.0f64, |m, x| m.max(x.abs())));
        let mut worst: f64 = 0.0;
        for r in 1..=cfg.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            let xr: Vec<f64> = x0.iter().map(|x| x + amplitude * rng.random_range(-1.0..1.0)).collect();
            match action.solve_from(xr, cfg) {
                Ok(o) => worst = worst.max((&o.x - &out.x).amax()),
                Err(e) => {
                    notes.push(format!("restart {r} failed: {e}"));
                    worst = f64::INFINITY;
                }
            }
        }
        Some(worst)
    } else {
        None
    };

    let traj = action.trajectory(out.x.as_slice())?;
    let p = momenta(l, &traj)?;
    let traj = traj.with_momenta(p)?;
    let report = el_residual(l, &traj, discretization_tolerance(&grid, l.orders()))?;
    Ok(Solution {
        trajectory: traj,
        summary: SolveSummary {
            method: Method::Direct,
            iterations: out.iterations,
            final_norm: out.scaled_gradient,
            history: out.history,
            report,
            restart_disagreement,
            saddle: out.saddle,
            notes,
        },
    })
}
