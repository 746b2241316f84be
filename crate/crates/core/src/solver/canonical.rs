use nalgebra::{DMatrix, DVector};

use super::{check_dims, BoundaryData, Method, SolveSummary, Solution, SolverConfig};
use crate::dynamics::{canonical_residual, Trajectory};
use crate::error::{Error, Result};
use crate::expr::{Expr, Point, Var};
use crate::frac_ops::{combined_caputo_matrix, combined_rl_matrix, FracOrder};
use crate::grid::{GridFn, UniformGrid};
use crate::model::HamiltonianSpec;

const MAX_HALVINGS: usize = 30;

/// Collocation of the canonical equations.
///
/// Per coordinate the unknowns are `q` at interior nodes and `p` at every
/// node. `r1 = ∂H/∂p − ^CD q` is imposed at every node (which fixes the
/// endpoint momenta) and `r2 = ∂H/∂q − D p` at interior nodes.
struct Collocation {
    grid: UniformGrid,
    dim: usize,
    bd: BoundaryData,
    caputo: Vec<DMatrix<f64>>,
    rl: Vec<DMatrix<f64>>,
    dh_dq: Vec<Expr>,
    dh_dp: Vec<Expr>,
    // second partials, indexed [i][j]
    h_pp: Vec<Vec<Expr>>,
    h_pq: Vec<Vec<Expr>>,
    h_qq: Vec<Vec<Expr>>,
}

struct State {
    q: Vec<DVector<f64>>,
    p: Vec<DVector<f64>>,
}

impl Collocation {
    fn new(h: &HamiltonianSpec, grid: UniformGrid, orders: &[FracOrder], bd: BoundaryData) -> Result<Self> {
        let dim = h.dim();
        let second = |a: &[Expr], f: fn(usize) -> Var| -> Vec<Vec<Expr>> {
            a.iter().map(|e| (0..dim).map(|j| e.diff(f(j))).collect()).collect()
        };
        let dh_dq: Vec<Expr> = (0..dim).map(|i| h.body().diff(Var::Coord(i))).collect();
        let dh_dp: Vec<Expr> = (0..dim).map(|i| h.body().diff(Var::Momentum(i))).collect();
        Ok(Self {
            caputo: orders.iter().map(|o| combined_caputo_matrix(&grid, o)).collect::<Result<_>>()?,
            rl: orders.iter().map(|o| combined_rl_matrix(&grid, o)).collect::<Result<_>>()?,
            h_pp: second(&dh_dp, Var::Momentum),
            h_pq: second(&dh_dp, Var::Coord),
            h_qq: second(&dh_dq, Var::Coord),
            dh_dq,
            dh_dp,
            grid,
            dim,
            bd,
        })
    }

    fn block(&self) -> usize {
        2 * self.grid.n()
    }

    fn unknowns(&self) -> usize {
        self.dim * self.block()
    }

    /// Layout per coordinate: `q_1..q_{n−1}` then `p_0..p_n`.
    fn unpack(&self, x: &DVector<f64>) -> State {
        let n = self.grid.n();
        let b = self.block();
        let mut q = Vec::with_capacity(self.dim);
        let mut p = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut qi = DVector::zeros(n + 1);
            qi[0] = self.bd.qa()[i];
            qi[n] = self.bd.qb()[i];
            qi.rows_mut(1, n - 1).copy_from(&x.rows(i * b, n - 1));
            q.push(qi);
            p.push(x.rows(i * b + n - 1, n + 1).into_owned());
        }
        State { q, p }
    }

    fn pack(&self, s: &State) -> DVector<f64> {
        let n = self.grid.n();
        let b = self.block();
        let mut x = DVector::zeros(self.unknowns());
        for i in 0..self.dim {
            x.rows_mut(i * b, n - 1).copy_from(&s.q[i].rows(1, n - 1));
            x.rows_mut(i * b + n - 1, n + 1).copy_from(&s.p[i]);
        }
        x
    }

    fn node_values(&self, s: &State, k: usize) -> (Vec<f64>, Vec<f64>) {
        (s.q.iter().map(|q| q[k]).collect(), s.p.iter().map(|p| p[k]).collect())
    }

    fn eval_at(e: &Expr, pt: &Point<'_>, k: usize) -> Result<f64> {
        e.eval(pt).map_err(|source| Error::EvalAt { node: k, source })
    }

    /// Residual vector: per coordinate `r1` at nodes `0..=n`, then `r2` at
    /// nodes `1..n−1`.
    fn residual(&self, s: &State) -> Result<DVector<f64>> {
        let n = self.grid.n();
        let b = self.block();
        let mut r = DVector::zeros(self.unknowns());
        let v: Vec<DVector<f64>> = (0..self.dim).map(|i| &self.caputo[i] * &s.q[i]).collect();
        let d: Vec<DVector<f64>> = (0..self.dim).map(|i| &self.rl[i] * &s.p[i]).collect();
        for k in 0..=n {
            let (qk, pk) = self.node_values(s, k);
            let pt = Point::at(self.grid.node(k)).q(&qk).p(&pk);
            for i in 0..self.dim {
                r[i * b + k] = Self::eval_at(&self.dh_dp[i], &pt, k)? - v[i][k];
                if k > 0 && k < n {
                    r[i * b + n + k] = Self::eval_at(&self.dh_dq[i], &pt, k)? - d[i][k];
                }
            }
        }
        Ok(r)
    }

    fn jacobian(&self, s: &State) -> Result<DMatrix<f64>> {
        let n = self.grid.n();
        let b = self.block();
        let mut jac = DMatrix::zeros(self.unknowns(), self.unknowns());
        let q_col = |j: usize, m: usize| j * b + m - 1;
        let p_col = |j: usize, m: usize| j * b + n - 1 + m;
        for k in 0..=n {
            let (qk, pk) = self.node_values(s, k);
            let pt = Point::at(self.grid.node(k)).q(&qk).p(&pk);
            let mut hpp = DMatrix::zeros(self.dim, self.dim);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    hpp[(i, j)] = Self::eval_at(&self.h_pp[i][j], &pt, k)?;
                }
            }
            let det = hpp.determinant();
            if det.abs() < 1e-10 {
                return Err(Error::SingularJacobian { det });
            }
            for i in 0..self.dim {
                let r1 = i * b + k;
                for j in 0..self.dim {
                    jac[(r1, p_col(j, k))] += hpp[(i, j)];
                    if k > 0 && k < n {
                        jac[(r1, q_col(j, k))] += Self::eval_at(&self.h_pq[i][j], &pt, k)?;
                    }
                }
                for m in 1..n {
                    jac[(r1, q_col(i, m))] -= self.caputo[i][(k, m)];
                }
                if k > 0 && k < n {
                    let r2 = i * b + n + k;
                    for j in 0..self.dim {
                        jac[(r2, q_col(j, k))] += Self::eval_at(&self.h_qq[i][j], &pt, k)?;
                        // ∂²H/∂q_i∂p_j = ∂²H/∂p_j∂q_i
                        jac[(r2, p_col(j, k))] += Self::eval_at(&self.h_pq[j][i], &pt, k)?;
                    }
                    for m in 0..=n {
                        jac[(r2, p_col(i, m))] -= self.rl[i][(k, m)];
                    }
                }
            }
        }
        Ok(jac)
    }
}

/// Damped Newton solve of the canonical equations with `q` fixed at both
/// ends by the boundary data.
pub fn solve_canonical(
    h: &HamiltonianSpec,
    bd: &BoundaryData,
    grid: UniformGrid,
    orders: &[FracOrder],
    cfg: &SolverConfig,
) -> Result<Solution> {
    check_dims(bd, h.dim(), cfg)?;
    if orders != h.orders() {
        return Err(Error::Mismatch("solver orders differ from the Hamiltonian's orders".into()));
    }
    let sys = Collocation::new(h, grid, orders, bd.clone())?;
    let q0: Vec<DVector<f64>> =
        cfg.starting_values(&grid, bd)?.into_iter().map(DVector::from_vec).collect();
    let p0 = (0..sys.dim).map(|i| &sys.caputo[i] * &q0[i]).collect();
    let mut x = sys.pack(&State { q: q0, p: p0 });
    let mut r = sys.residual(&sys.unpack(&x))?;
    let mut history = vec![r.amax()];
    let mut iterations = 0;
    while r.amax() > cfg.residual_tolerance {
        if iterations == cfg.max_iterations {
            return Err(Error::NoConvergence { iterations, norm: r.amax() });
        }
        let jac = sys.jacobian(&sys.unpack(&x))?;
        let step = jac.lu().solve(&r).ok_or(Error::SingularJacobian { det: 0.0 })?;
        let norm0 = r.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let xt = &x - lambda * &step;
            if let Ok(rt) = sys.residual(&sys.unpack(&xt)) {
                if rt.norm() < norm0 {
                    x = xt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearch(format!(
                "Newton step gives no decrease after {MAX_HALVINGS} halvings (residual {:.3e})",
                r.amax()
            )));
        }
        iterations += 1;
        history.push(r.amax());
    }
    log::debug!("canonical solve: {iterations} Newton steps, residual {:.3e}", r.amax());

    let s = sys.unpack(&x);
    let to_fns = |v: Vec<DVector<f64>>| v.into_iter().map(|c| GridFn::new(grid, c.as_slice().to_vec())).collect::<Result<Vec<_>>>();
    let traj = Trajectory::new(orders.to_vec(), to_fns(s.q)?, Some(to_fns(s.p)?))?;
    let report = canonical_residual(h, &traj, 10.0 * cfg.residual_tolerance)?;
    Ok(Solution {
        trajectory: traj,
        summary: SolveSummary {
            method: Method::Canonical,
            iterations,
            final_norm: r.amax(),
            history,
            report,
            restart_disagreement: None,
            saddle: false,
            notes: Vec::new(),
        },
    })
}
