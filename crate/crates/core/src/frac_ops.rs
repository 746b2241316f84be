//! Discrete Caputo and Riemann–Liouville derivatives of order in (0, 1).
//!
//! The left Caputo derivative uses the L1 scheme, accurate to O(h^{2−μ}) for
//! smooth functions. Right-sided operators are obtained by reflecting the grid,
//! and Riemann–Liouville derivatives add the boundary term
//! `f(a)·(t − a)^{−μ} / Γ(1 − μ)` to the Caputo value, so both families share a
//! single discretization.
//!
//! Every operator is also available as a dense `(n+1)×(n+1)` matrix; the solver
//! assembles gradients and Jacobians from those.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gamma::gamma;
use crate::grid::{GridFn, UniformGrid};

/// Orders `(α, β, γ)` of the combined operators for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl FracOrder {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        check_mu(alpha).map_err(|_| Error::InvalidOrder(format!("alpha = {alpha} must lie in (0, 1)")))?;
        check_mu(beta).map_err(|_| Error::InvalidOrder(format!("beta = {beta} must lie in (0, 1)")))?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidOrder(format!("gamma = {gamma} must lie in [0, 1]")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl fmt::Display for FracOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(alpha={}, beta={}, gamma={})", self.alpha, self.beta, self.gamma)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidOrder(format!("order {mu} must lie in (0, 1)")))
    }
}

fn l1_weights(n: usize, mu: f64) -> Vec<f64> {
    let e = 1.0 - mu;
    (0..n).map(|j| ((j + 1) as f64).powf(e) - (j as f64).powf(e)).collect()
}

fn l1_scale(h: f64, mu: f64) -> f64 {
    h.powf(-mu) / gamma(2.0 - mu)
}

/// Left Caputo derivative `^C_aD_t^μ f` by the L1 scheme.
pub fn caputo_left(f: &GridFn, mu: f64) -> Result<GridFn> {
    check_mu(mu)?;
    f.require_valid()?;
    let grid = *f.grid();
    let n = grid.n();
    let y = f.values();
    let w = l1_weights(n, mu);
    let c = l1_scale(grid.h(), mu);
    let diffs: Vec<f64> = (1..=n).map(|m| y[m] - y[m - 1]).collect();

    let mut out = vec![0.0; n + 1];
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for j in 0..k {
            acc += w[j] * diffs[k - j - 1];
        }
        *slot = c * acc;
    }
    GridFn::new(grid, out)
}

/// Right Caputo derivative `^C_tD_b^μ f`, computed by reflection through the
/// midpoint of the interval.
pub fn caputo_right(f: &GridFn, mu: f64) -> Result<GridFn> {
    Ok(caputo_left(&f.reflect(), mu)?.reflect())
}

/// Left Riemann–Liouville derivative `_aD_t^μ f`. Node 0 is invalid when
/// `f(a) ≠ 0`.
pub fn rl_left(f: &GridFn, mu: f64) -> Result<GridFn> {
    let mut out = caputo_left(f, mu)?;
    let fa = f.values()[0];
    if fa != 0.0 {
        let grid = *f.grid();
        let g = gamma(1.0 - mu);
        let mut values = out.values().to_vec();
        let h = grid.h();
        for (k, v) in values.iter_mut().enumerate().skip(1) {
            *v += fa * (k as f64 * h).powf(-mu) / g;
        }
        out = GridFn::new(grid, values)?;
        out.set_invalid(0);
    }
    Ok(out)
}

/// Right Riemann–Liouville derivative `_tD_b^μ f`. Node n is invalid when
/// `f(b) ≠ 0`.
pub fn rl_right(f: &GridFn, mu: f64) -> Result<GridFn> {
    Ok(rl_left(&f.reflect(), mu)?.reflect())
}

/// Combined Caputo operator `γ·^C_aD^α + (1−γ)·^C_tD_b^β`.
pub fn combined_caputo(f: &GridFn, o: &FracOrder) -> Result<GridFn> {
    if o.gamma == 1.0 {
        return caputo_left(f, o.alpha);
    }
    if o.gamma == 0.0 {
        return caputo_right(f, o.beta);
    }
    caputo_left(f, o.alpha)?.lin_comb(o.gamma, &caputo_right(f, o.beta)?, 1.0 - o.gamma)
}

/// Combined Riemann–Liouville operator `(1−γ)·_aD^β + γ·_tD_b^α`, the one
/// appearing in the Euler–Lagrange and canonical equations.
pub fn combined_rl(f: &GridFn, o: &FracOrder) -> Result<GridFn> {
    if o.gamma == 1.0 {
        return rl_right(f, o.alpha);
    }
    if o.gamma == 0.0 {
        return rl_left(f, o.beta);
    }
    rl_left(f, o.beta)?.lin_comb(1.0 - o.gamma, &rl_right(f, o.alpha)?, o.gamma)
}

/// Dense lower-triangular matrix of [`caputo_left`].
pub fn caputo_left_matrix(grid: &UniformGrid, mu: f64) -> Result<DMatrix<f64>> {
    check_mu(mu)?;
    let n = grid.n();
    let w = l1_weights(n, mu);
    let c = l1_scale(grid.h(), mu);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for k in 1..=n {
        m[(k, k)] = c * w[0];
        m[(k, 0)] = -c * w[k - 1];
        for j in 1..k {
            m[(k, j)] = c * (w[k - j] - w[k - j - 1]);
        }
    }
    Ok(m)
}

fn reflect_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() - 1;
    DMatrix::from_fn(n + 1, n + 1, |k, j| m[(n - k, n - j)])
}

pub fn caputo_right_matrix(grid: &UniformGrid, mu: f64) -> Result<DMatrix<f64>> {
    Ok(reflect_matrix(&caputo_left_matrix(grid, mu)?))
}

/// Dense matrix of [`rl_left`]. Row 0 holds the Caputo row (zero); the
/// singular value there is not representable and callers must mask it.
pub fn rl_left_matrix(grid: &UniformGrid, mu: f64) -> Result<DMatrix<f64>> {
    let mut m = caputo_left_matrix(grid, mu)?;
    let g = gamma(1.0 - mu);
    let h = grid.h();
    for k in 1..=grid.n() {
        m[(k, 0)] += (k as f64 * h).powf(-mu) / g;
    }
    Ok(m)
}

pub fn rl_right_matrix(grid: &UniformGrid, mu: f64) -> Result<DMatrix<f64>> {
    Ok(reflect_matrix(&rl_left_matrix(grid, mu)?))
}

pub fn combined_caputo_matrix(grid: &UniformGrid, o: &FracOrder) -> Result<DMatrix<f64>> {
    if o.gamma == 1.0 {
        return caputo_left_matrix(grid, o.alpha);
    }
    if o.gamma == 0.0 {
        return caputo_right_matrix(grid, o.beta);
    }
    Ok(caputo_left_matrix(grid, o.alpha)? * o.gamma + caputo_right_matrix(grid, o.beta)? * (1.0 - o.gamma))
}

pub fn combined_rl_matrix(grid: &UniformGrid, o: &FracOrder) -> Result<DMatrix<f64>> {
    if o.gamma == 1.0 {
        return rl_right_matrix(grid, o.alpha);
    }
    if o.gamma == 0.0 {
        return rl_left_matrix(grid, o.beta);
    }
    Ok(rl_left_matrix(grid, o.beta)? * (1.0 - o.gamma) + rl_right_matrix(grid, o.alpha)? * o.gamma)
}

/// Selects one of the six operators; one-sided operators take their order
/// from the slot they occupy in the combined definitions (left Caputo and
/// right RL use α, right Caputo and left RL use β).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    CaputoLeft,
    CaputoRight,
    RlLeft,
    RlRight,
    CombinedCaputo,
    CombinedRl,
}

impl Operator {
    pub fn apply(&self, f: &GridFn, o: &FracOrder) -> Result<GridFn> {
        match self {
            Operator::CaputoLeft => caputo_left(f, o.alpha),
            Operator::CaputoRight => caputo_right(f, o.beta),
            Operator::RlLeft => rl_left(f, o.beta),
            Operator::RlRight => rl_right(f, o.alpha),
            Operator::CombinedCaputo => combined_caputo(f, o),
            Operator::CombinedRl => combined_rl(f, o),
        }
    }

    pub fn matrix(&self, grid: &UniformGrid, o: &FracOrder) -> Result<DMatrix<f64>> {
        match self {
            Operator::CaputoLeft => caputo_left_matrix(grid, o.alpha),
            Operator::CaputoRight => caputo_right_matrix(grid, o.beta),
            Operator::RlLeft => rl_left_matrix(grid, o.beta),
            Operator::RlRight => rl_right_matrix(grid, o.alpha),
            Operator::CombinedCaputo => combined_caputo_matrix(grid, o),
            Operator::CombinedRl => combined_rl_matrix(grid, o),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Operator::CaputoLeft => "cl",
            Operator::CaputoRight => "cr",
            Operator::RlLeft => "rll",
            Operator::RlRight => "rlr",
            Operator::CombinedCaputo => "cc",
            Operator::CombinedRl => "crl",
        }
    }

    pub const ALL: [Operator; 6] = [
        Operator::CaputoLeft,
        Operator::CaputoRight,
        Operator::RlLeft,
        Operator::RlRight,
        Operator::CombinedCaputo,
        Operator::CombinedRl,
    ];
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.code() == s)
            .ok_or_else(|| format!("unknown operator `{s}` (expected cl, cr, rll, rlr, cc or crl)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> UniformGrid {
        UniformGrid::new(0.0, 1.0, n).unwrap()
    }

    fn order(a: f64, b: f64, g: f64) -> FracOrder {
        FracOrder::new(a, b, g).unwrap()
    }

    #[test]
    fn order_invariants() {
        assert!(FracOrder::new(0.0, 0.5, 0.5).is_err());
        assert!(FracOrder::new(0.5, 1.0, 0.5).is_err());
        assert!(FracOrder::new(0.5, 0.5, 1.5).is_err());
        assert!(FracOrder::new(0.5, 0.5, -0.1).is_err());
        assert!(FracOrder::new(0.5, 0.5, 0.0).is_ok());
        assert!(FracOrder::new(0.5, 0.5, 1.0).is_ok());
    }

    #[test]
    fn caputo_annihilates_constants_exactly() {
        let f = GridFn::constant(grid(32), 2.75);
        for mu in [0.1, 0.5, 0.9] {
            assert!(caputo_left(&f, mu).unwrap().values().iter().all(|&v| v == 0.0));
            assert!(caputo_right(&f, mu).unwrap().values().iter().all(|&v| v == 0.0));
        }
        let cc = combined_caputo(&f, &order(0.3, 0.7, 0.4)).unwrap();
        assert!(cc.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_orders_outside_unit_interval() {
        let f = GridFn::constant(grid(8), 1.0);
        assert!(caputo_left(&f, 0.0).is_err());
        assert!(caputo_left(&f, 1.0).is_err());
        assert!(rl_right(&f, 1.2).is_err());
    }

    #[test]
    fn left_caputo_of_t_at_half_order() {
        let g = grid(1024);
        let f = GridFn::from_fn(g, |t| t);
        let d = caputo_left(&f, 0.5).unwrap();
        let want = 2.0 / std::f64::consts::PI.sqrt();
        assert!(((d.values()[1024] - want) / want).abs() < 2e-3);
        assert_eq!(d.values()[0], 0.0);
        assert!(d.is_valid(0));
    }

    #[test]
    fn right_caputo_reflection_identity() {
        let g = grid(64);
        let f = GridFn::from_fn(g, |t| (3.0 * t).sin() + t * t);
        let r = caputo_right(&f, 0.4).unwrap();
        let l = caputo_left(&f.reflect(), 0.4).unwrap();
        for k in 0..=64 {
            assert_eq!(r.values()[k], l.values()[64 - k]);
        }
        assert_eq!(r.values()[64], 0.0);
    }

    #[test]
    fn rl_left_reduces_to_caputo_when_f_vanishes_at_a() {
        let g = grid(64);
        let f = GridFn::from_fn(g, |t| t);
        assert_eq!(rl_left(&f, 0.5).unwrap(), caputo_left(&f, 0.5).unwrap());
        let f = GridFn::from_fn(g, |t| 1.0 - t);
        assert_eq!(rl_right(&f, 0.3).unwrap(), caputo_right(&f, 0.3).unwrap());
    }

    #[test]
    fn rl_of_constant() {
        let g = grid(64);
        let c = 1.7;
        let f = GridFn::constant(g, c);
        let mu = 0.5;
        let left = rl_left(&f, mu).unwrap();
        let right = rl_right(&f, mu).unwrap();
        assert!(!left.is_valid(0));
        assert!(!right.is_valid(64));
        let gm = statrs::function::gamma::gamma(1.0 - mu);
        for (k, t) in g.nodes().into_iter().enumerate().skip(1).take(62) {
            let wl = c * t.powf(-mu) / gm;
            let wr = c * (1.0 - t).powf(-mu) / gm;
            assert!((left.values()[k] - wl).abs() < 1e-12 * wl.abs());
            assert!((right.values()[k] - wr).abs() < 1e-12 * wr.abs());
        }
    }

    #[test]
    fn rl_reflection_identity() {
        let g = grid(50);
        let f = GridFn::from_fn(g, |t| (2.0 * t).exp());
        let r = rl_right(&f, 0.6).unwrap();
        let l = rl_left(&f.reflect(), 0.6).unwrap();
        assert_eq!(r, l.reflect());
    }

    #[test]
    fn combined_reductions() {
        let g = grid(40);
        let f = GridFn::from_fn(g, |t| t.cos() + t);
        let a = 0.3;
        let b = 0.7;
        assert_eq!(combined_caputo(&f, &order(a, b, 1.0)).unwrap(), caputo_left(&f, a).unwrap());
        assert_eq!(combined_caputo(&f, &order(a, b, 0.0)).unwrap(), caputo_right(&f, b).unwrap());
        assert_eq!(combined_rl(&f, &order(a, b, 1.0)).unwrap(), rl_right(&f, a).unwrap());
        assert_eq!(combined_rl(&f, &order(a, b, 0.0)).unwrap(), rl_left(&f, b).unwrap());
    }

    #[test]
    fn combined_rl_mask_is_intersection() {
        let g = grid(16);
        let f = GridFn::constant(g, 1.0);
        let r = combined_rl(&f, &order(0.4, 0.4, 0.5)).unwrap();
        assert!(!r.is_valid(0) && !r.is_valid(16));
        assert!((1..16).all(|k| r.is_valid(k)));
        let z = combined_rl(&GridFn::zeros(g), &order(0.4, 0.4, 0.5)).unwrap();
        assert!(z.all_valid() && z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matrices_agree_with_maps() {
        let g = grid(200);
        let f = GridFn::from_fn(g, |t| (2.0 * t).sin() + 0.5 * t * t + 0.3);
        let o = order(0.35, 0.8, 0.6);
        let x = nalgebra::DVector::from_column_slice(f.values());
        for op in Operator::ALL {
            let m = op.matrix(&g, &o).unwrap();
            let via_matrix = &m * &x;
            let via_map = op.apply(&f, &o).unwrap();
            for k in 0..=200 {
                if !via_map.is_valid(k) {
                    continue;
                }
                let scale: f64 = (0..=200).map(|j| (m[(k, j)] * x[j]).abs()).sum::<f64>().max(1.0);
                let diff = (via_matrix[k] - via_map.values()[k]).abs();
                assert!(diff <= 1e-14 * scale, "{op:?} node {k}: diff {diff:e}, scale {scale:e}");
            }
        }
    }

    #[test]
    fn operator_codes_round_trip() {
        for op in Operator::ALL {
            assert_eq!(op.code().parse::<Operator>().unwrap(), op);
        }
        assert!("xx".parse::<Operator>().is_err());
    }
}
