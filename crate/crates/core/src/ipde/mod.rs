//! Space discretization of the nonlocal generator and the penalized backward solver.

mod generator;
mod grid;
mod problem;
mod solver;

pub use generator::DiscreteGenerator;
pub use grid::{BoundaryRule, Grid, GridFunction, SpaceTimeField};
pub use problem::{coefficient, Coefficient, NoisePath, ProblemSpec, INACTIVE_OBSTACLE};
pub use solver::{
    integrated_energy, integrated_energy_from, solve_penalized, step_backward_penalized,
    time_distance, time_norm, trapezoid, PenalizedSolution,
};

/// Builds the generator for `grid` and `kernel`.
pub fn build_generator(
    grid: Grid,
    kernel: crate::levy::JumpKernel,
) -> crate::error::Result<DiscreteGenerator> {
    DiscreteGenerator::new(grid, kernel)
}
