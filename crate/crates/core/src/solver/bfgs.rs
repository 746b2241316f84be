use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Relative rounding allowance on the objective; below it function values
/// cannot rank trial points.
pub(crate) const NOISE: f64 = 1e-12;

pub(super) struct Outcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub scaled_gradient: f64,
    pub history: Vec<f64>,
    /// Set when an accepted step showed negative curvature; `x` is then the
    /// last iterate, not a minimizer.
    pub negative_curvature: bool,
}

fn scaled_norm(g: &DVector<f64>, scale: &DVector<f64>) -> f64 {
    g.iter().zip(scale.iter()).fold(0.0, |m, (gi, si)| m.max(gi.abs() / si))
}

/// BFGS with backtracking. `scale` holds the per-variable weights used in
/// the stopping test `max |g_m| / scale_m ≤ gtol`.
///
/// A trial point needs Armijo decrease, or, when the objective change is at
/// rounding level (`NOISE·(1 + |f|)`), the approximate Wolfe test on the
/// directional derivative. The objective therefore never increases by more
/// than that rounding allowance.
/// Stops early, flagging the outcome, when an accepted step has `sᵀy < 0`.
pub(super) fn minimize<F>(mut obj: F, x0: DVector<f64>, scale: &DVector<f64>, max_iter: usize, gtol: f64) -> Result<Outcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let m = x0.len();
    let mut x = x0;
    let (mut f, mut g) = obj(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::LineSearch("objective is not finite at the starting point".into()));
    }
    let mut hinv = DMatrix::<f64>::identity(m, m);
    let mut fresh = true;
    let mut history = vec![f];
    for iter in 0..max_iter {
        let gn = scaled_norm(&g, scale);
        if gn <= gtol || m == 0 {
            return Ok(Outcome { x, iterations: iter, scaled_gradient: gn, history, negative_curvature: false });
        }
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            hinv = DMatrix::identity(m, m);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let noise = NOISE * (1.0 + f.abs());
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xt = &x + lambda * &d;
            if xt == x {
                break;
            }
            if let Ok((ft, gt)) = obj(&xt) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                    let armijo = ft <= f + ARMIJO * lambda * slope;
                    let dd = gt.dot(&d);
                    let flat = (ft - f).abs() <= noise && 0.9 * slope <= dd && dd <= -0.8 * slope;
                    if armijo || flat {
                        accepted = Some((xt, ft, gt));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if !fresh {
                // retry once along steepest descent before giving up
                hinv = DMatrix::identity(m, m);
                fresh = true;
                continue;
            }
            return Err(Error::LineSearch(format!(
                "no acceptable step after {MAX_HALVINGS} halvings (scaled gradient {gn:.3e})"
            )));
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy < -1e-8 * s.norm() * y.norm() {
            history.push(fnew);
            let gn = scaled_norm(&gnew, scale);
            return Ok(Outcome { x: xn, iterations: iter + 1, scaled_gradient: gn, history, negative_curvature: true });
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (rho + rho * rho * yhy) * (&s * s.transpose());
            hinv -= rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        x = xn;
        f = fnew;
        g = gnew;
        history.push(f);
    }
    Err(Error::NoConvergence { iterations: max_iter, norm: scaled_norm(&g, scale) })
}
