//! Fixtures shared by the criterion benches.

use fracvar::{BoundaryData, FracOrder, GridFn, HamiltonianSpec, LagrangianSpec, UniformGrid};

pub const OSCILLATOR_L: &str = "0.5*v1^2 - 0.5*q1^2";
pub const OSCILLATOR_H: &str = "0.5*p1^2 + 0.5*q1^2";

pub fn grid(n: usize) -> UniformGrid {
    UniformGrid::new(0.0, 1.0, n).expect("valid grid")
}

pub fn order(alpha: f64, beta: f64, gamma: f64) -> FracOrder {
    FracOrder::new(alpha, beta, gamma).expect("valid order")
}

pub fn smooth(n: usize) -> GridFn {
    GridFn::from_fn(grid(n), |t| (3.0 * t).sin() + t * t)
}

pub fn oscillator(o: FracOrder) -> (LagrangianSpec, HamiltonianSpec) {
    (
        LagrangianSpec::parse(OSCILLATOR_L, vec![o]).expect("valid lagrangian"),
        HamiltonianSpec::parse(OSCILLATOR_H, vec![o]).expect("valid hamiltonian"),
    )
}

pub fn sine_boundary() -> BoundaryData {
    BoundaryData::new(vec![0.0], vec![1f64.sin()]).expect("valid boundary")
}
