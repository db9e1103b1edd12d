use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::generator::DiscreteGenerator;
use super::grid::{GridFunction, SpaceTimeField};
use super::problem::{NoisePath, ProblemSpec};
use crate::error::{config, Error, Result};

/// Output of a penalized backward sweep.
#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub level: u64,
    pub field: SpaceTimeField,
    /// Mass `n (u_k - v_k)^- dt h` applied on the step ending at `t_k`, stored at index `k`.
    /// Index 0 carries no mass.
    pub penalty_mass: SpaceTimeField,
}

type Factor = Cholesky<f64, Dyn>;

/// Factorization of `(1 + dt kappa) I - dt A_h`, which is symmetric positive definite.
fn implicit_factor(gen: &DiscreteGenerator, dt: f64, discount: f64) -> Result<Factor> {
    let n = gen.grid().len();
    let m = DMatrix::identity(n, n) * (1.0 + dt * discount) - gen.matrix() * dt;
    Cholesky::new(m).ok_or_else(|| {
        Error::Numerical(format!(
            "implicit operator not positive definite at dt = {dt}"
        ))
    })
}

fn check_penalty(n: u64, dt: f64) -> Result<()> {
    if n as f64 * dt > 1.0 + 1e-12 {
        return config(format!(
            "penalty level {n} with step {dt} violates n * dt <= 1"
        ));
    }
    Ok(())
}

// Explicit part of step `i` (interval [t_i, t_{i+1}]): all nonlinear terms at the later level.
fn explicit_rhs(
    u_next: &[f64],
    spec: &ProblemSpec,
    n: u64,
    i: usize,
    d_b: &[f64],
    mass: Option<&mut [f64]>,
) -> Vec<f64> {
    let grid = spec.terminal.grid;
    let times = spec.times();
    let (t, dt) = (times[i + 1], times[i + 1] - times[i]);
    let grad = grid.gradient(u_next);
    let v = spec.obstacle.slice(i + 1);
    let h_x = grid.spacing();
    let n = n as f64;
    let mut rhs = Vec::with_capacity(u_next.len());
    let mut mass = mass;
    for (j, (&y, &z)) in u_next.iter().zip(&grad).enumerate() {
        let x = grid.node(j);
        let push = n * (v[j] - y).max(0.0);
        if let Some(m) = mass.as_deref_mut() {
            m[j] = push * dt * h_x;
        }
        let mut r = y + dt * ((spec.f)(t, x, y, z) + push);
        for (hl, db) in spec.h.iter().zip(d_b) {
            r += hl(t, x, y, z) * db;
        }
        rhs.push(r);
    }
    rhs
}

fn check_step(
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    u_next: &[f64],
    i: usize,
    d_b: &[f64],
) -> Result<f64> {
    let times = spec.times();
    if i + 1 >= times.len() {
        return config(format!(
            "step {i} outside a time grid of {} nodes",
            times.len()
        ));
    }
    if gen.grid() != spec.terminal.grid || u_next.len() != gen.grid().len() {
        return config("generator, problem and state live on different grids");
    }
    if !spec.h.is_empty() && d_b.len() != spec.h.len() {
        return config(format!(
            "noise increment of dimension {} for {} coefficients",
            d_b.len(),
            spec.h.len()
        ));
    }
    Ok(times[i + 1] - times[i])
}

/// One backward step from `t_{i+1}` to `t_i` of the penalized equation
/// `du + [A u + f(u, Du) + n (u - v)^- - kappa u] dt + h(u, Du) dB = 0`.
///
/// `A_h` and the killing term are implicit; `f`, the penalty and `h` are evaluated at
/// `u_next = u_{i+1}` and `t_{i+1}`.
pub fn step_backward_penalized(
    u_next: &GridFunction,
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    n: u64,
    i: usize,
    d_b: &[f64],
) -> Result<GridFunction> {
    let dt = check_step(spec, gen, &u_next.values, i, d_b)?;
    check_penalty(n, dt)?;
    let factor = implicit_factor(gen, dt, spec.discount)?;
    let rhs = explicit_rhs(&u_next.values, spec, n, i, d_b, None);
    let u = factor.solve(&DVector::from_vec(rhs));
    Ok(GridFunction {
        grid: u_next.grid,
        values: u.as_slice().to_vec(),
    })
}

/// Full backward sweep from `u_T = Phi` at penalty level `n`.
pub fn solve_penalized(
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    n: u64,
    noise: &NoisePath,
) -> Result<PenalizedSolution> {
    spec.validate()?;
    let times = spec.times();
    if noise.times() != times {
        return config("noise path and problem use different time grids");
    }
    if !spec.h.is_empty() && noise.dim() != spec.h.len() {
        return config(format!(
            "noise of dimension {} for {} coefficients",
            noise.dim(),
            spec.h.len()
        ));
    }
    let grid = spec.terminal.grid;
    let mut field = SpaceTimeField::zeros(grid, std::sync::Arc::clone(times));
    let mut mass = SpaceTimeField::zeros(grid, std::sync::Arc::clone(times));
    let last = times.len() - 1;
    field.slice_mut(last).copy_from_slice(&spec.terminal.values);

    let mut factors: Vec<(f64, Factor)> = Vec::new();
    for i in (0..last).rev() {
        let dt = times[i + 1] - times[i];
        let d_b = if spec.h.is_empty() {
            &[][..]
        } else {
            noise.increment(i)
        };
        check_step(spec, gen, field.slice(i + 1), i, d_b)?;
        check_penalty(n, dt)?;
        let pos = match factors.iter().position(|(d, _)| *d == dt) {
            Some(p) => p,
            None => {
                factors.push((dt, implicit_factor(gen, dt, spec.discount)?));
                factors.len() - 1
            }
        };
        let rhs = explicit_rhs(
            field.slice(i + 1),
            spec,
            n,
            i,
            d_b,
            Some(mass.slice_mut(i + 1)),
        );
        let u = factors[pos].1.solve(&DVector::from_vec(rhs));
        field.slice_mut(i).copy_from_slice(u.as_slice());
    }
    Ok(PenalizedSolution {
        level: n,
        field,
        penalty_mass: mass,
    })
}

/// Trapezoid rule for samples `values[k]` at `times[k]`.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// `int_{t_k}^T E(u_s) ds` by the trapezoid rule.
pub fn integrated_energy_from(field: &SpaceTimeField, gen: &DiscreteGenerator, k: usize) -> f64 {
    let e: Vec<f64> = (k..field.n_times())
        .map(|j| gen.dirichlet_energy(field.slice(j), field.slice(j)))
        .collect();
    trapezoid(&field.times()[k..], &e)
}

pub fn integrated_energy(field: &SpaceTimeField, gen: &DiscreteGenerator) -> f64 {
    integrated_energy_from(field, gen, 0)
}

/// `sup_t ||w_t||_2 + (int_0^T E(w_t) dt)^{1/2}`.
pub fn time_norm(field: &SpaceTimeField, gen: &DiscreteGenerator) -> f64 {
    let grid = field.grid();
    let sup = (0..field.n_times())
        .map(|k| grid.norm(field.slice(k)))
        .fold(0.0, f64::max);
    sup + integrated_energy(field, gen).max(0.0).sqrt()
}

/// `||a - b||_T`.
pub fn time_distance(
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    gen: &DiscreteGenerator,
) -> Result<f64> {
    Ok(time_norm(&a.zip_with(b, |x, y| x - y)?, gen))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ipde::{coefficient, BoundaryRule, Grid, INACTIVE_OBSTACLE};
    use crate::levy::{uniform_time_grid, JumpKernel};
    use proptest::prelude::*;

    fn setup(rule: BoundaryRule, n_t: usize) -> (DiscreteGenerator, Arc<Vec<f64>>) {
        let grid = Grid::new(8.0, 65, rule).unwrap();
        let gen = DiscreteGenerator::new(grid, JumpKernel::new(1.0, 0.25, 4.0).unwrap()).unwrap();
        (gen, Arc::new(uniform_time_grid(1.0, n_t)))
    }

    fn inactive(
        gen: &DiscreteGenerator,
        times: &Arc<Vec<f64>>,
        terminal: GridFunction,
    ) -> ProblemSpec {
        let v = SpaceTimeField::constant(gen.grid(), Arc::clone(times), INACTIVE_OBSTACLE);
        ProblemSpec::new(terminal, v).unwrap()
    }

    #[test]
    fn constants_are_preserved_on_periodic_grid() {
        let (gen, times) = setup(BoundaryRule::Periodic, 8);
        let spec = inactive(&gen, &times, GridFunction::constant(gen.grid(), 2.0));
        let u = step_backward_penalized(&spec.terminal, &spec, &gen, 4, 7, &[]).unwrap();
        for v in u.values {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inactive_penalty_changes_nothing() {
        let (gen, times) = setup(BoundaryRule::ZeroExtension, 8);
        let phi = gen.grid().sample(|x| (-x * x).exp());
        let spec = inactive(&gen, &times, phi).with_f(coefficient(|t, x, _, _| t * (-x * x).exp()));
        let noise = NoisePath::zero(Arc::clone(&times), 0);
        let a = solve_penalized(&spec, &gen, 0, &noise).unwrap();
        let b = solve_penalized(&spec, &gen, 8, &noise).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(b.penalty_mass.total(), 0.0);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (gen, times) = setup(BoundaryRule::ZeroExtension, 8);
        let v = SpaceTimeField::zeros(gen.grid(), Arc::clone(&times));
        let spec = ProblemSpec::new(GridFunction::zeros(gen.grid()), v).unwrap();
        let noise = NoisePath::zero(Arc::clone(&times), 0);
        for n in [1, 4, 8] {
            let s = solve_penalized(&spec, &gen, n, &noise).unwrap();
            assert_eq!(s.field.sup_norm(), 0.0);
        }
    }

    #[test]
    fn penalty_stiffness_rule() {
        let (gen, times) = setup(BoundaryRule::ZeroExtension, 8);
        let spec = inactive(&gen, &times, GridFunction::zeros(gen.grid()));
        let noise = NoisePath::zero(Arc::clone(&times), 0);
        assert!(solve_penalized(&spec, &gen, 8, &noise).is_ok());
        assert!(matches!(
            solve_penalized(&spec, &gen, 9, &noise),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn mismatched_noise_is_rejected() {
        let (gen, times) = setup(BoundaryRule::ZeroExtension, 8);
        let spec = inactive(&gen, &times, GridFunction::zeros(gen.grid()))
            .with_h(vec![coefficient(|_, _, _, _| 1.0)]);
        let other = Arc::new(uniform_time_grid(1.0, 16));
        assert!(solve_penalized(&spec, &gen, 1, &NoisePath::zero(other, 1)).is_err());
        assert!(solve_penalized(&spec, &gen, 1, &NoisePath::zero(Arc::clone(&times), 2)).is_err());
    }

    #[test]
    fn penalty_mass_is_recorded_at_the_later_node() {
        let (gen, times) = setup(BoundaryRule::ZeroExtension, 8);
        let v = SpaceTimeField::from_fn(gen.grid(), Arc::clone(&times), |t, x| (-x * x).exp() - t);
        let spec = inactive(&gen, &times, GridFunction::zeros(gen.grid()))
            .with_obstacle(v.clone())
            .unwrap();
        let s = solve_penalized(&spec, &gen, 8, &NoisePath::zero(Arc::clone(&times), 0)).unwrap();
        assert!(s.penalty_mass.slice(0).iter().all(|&m| m == 0.0));
        let h = gen.grid().spacing();
        for k in 1..times.len() {
            for j in 0..65 {
                let expected = 8.0 * (v.slice(k)[j] - s.field.slice(k)[j]).max(0.0) * 0.125 * h;
                assert_eq!(s.penalty_mass.slice(k)[j], expected);
            }
        }
        assert!(s.penalty_mass.total() > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn noise_enters_affinely(seed in any::<u64>(), amp in 0.1f64..2.0) {
            let (gen, times) = setup(BoundaryRule::ZeroExtension, 16);
            let phi = gen.grid().sample(|x| (-x * x / 4.0).exp());
            let spec = inactive(&gen, &times, phi)
                .with_h(vec![coefficient(move |t, x, _, _| amp * (1.0 + t) * (-x * x).exp())]);
            let noise = NoisePath::sample(Arc::clone(&times), 1, seed).unwrap();
            let plus = solve_penalized(&spec, &gen, 0, &noise).unwrap().field;
            let minus = solve_penalized(&spec, &gen, 0, &noise.negated()).unwrap().field;
            let zero = solve_penalized(&spec, &gen, 0, &NoisePath::zero(Arc::clone(&times), 1)).unwrap().field;
            let sum = plus.zip_with(&minus, |a, b| a + b).unwrap();
            let gap = sum.zip_with(&zero, |s, z| s - 2.0 * z).unwrap().sup_norm();
            prop_assert!(gap < 1e-10, "gap {}", gap);
        }
    }
}
