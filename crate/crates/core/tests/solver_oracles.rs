mod common;

use std::sync::Arc;

use ospde::fixtures::{gaussian_bump, smooth_bump, Fixture, Setup};
use ospde::ipde::{
    coefficient, solve_penalized, BoundaryRule, Grid, GridFunction, NoisePath, ProblemSpec,
};
use ospde::levy::JumpKernel;
use ospde::obstacle::{skorokhod_check, solve_obstacle, weak_form_residual, TestFunction};
use ospde::semigroup::Semigroup;

fn small_setup(n_t: usize) -> Setup {
    let grid = Grid::new(8.0, 129, BoundaryRule::ZeroExtension).unwrap();
    Setup::new(grid, JumpKernel::new(1.0, 0.25, 4.0).unwrap(), 1.0, n_t).unwrap()
}

#[test]
fn penalized_limit_approaches_projected_scheme() {
    let setup = small_setup(128);
    let spec = Fixture::Active.build(&setup).unwrap();
    let exact = common::psor_obstacle(&setup.gen, &spec.terminal.values, &spec.obstacle);
    let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
    let errs: Vec<f64> = [8u64, 32, 128]
        .iter()
        .map(|&n| {
            let u = solve_penalized(&spec, &setup.gen, n, &noise).unwrap().field;
            u.zip_with(&exact, |a, b| a - b).unwrap().sup_norm()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] < 0.05, "{errs:?}");
}

#[test]
fn penalized_solutions_stay_below_projected_scheme() {
    let setup = small_setup(128);
    let spec = Fixture::Active.build(&setup).unwrap();
    let exact = common::psor_obstacle(&setup.gen, &spec.terminal.values, &spec.obstacle);
    let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
    for n in [4u64, 32, 128] {
        let u = solve_penalized(&spec, &setup.gen, n, &noise).unwrap().field;
        let above = u
            .zip_with(&exact, |a, b| a - b)
            .unwrap()
            .data()
            .iter()
            .copied()
            .fold(f64::MIN, f64::max);
        assert!(above < 1e-3, "n = {n}: {above}");
    }
}

#[test]
fn nonnegative_data_never_activate_zero_obstacle() {
    let setup = small_setup(64);
    let zero = setup.field(|_, _| 0.0);
    let spec = ProblemSpec::new(setup.grid.sample(gaussian_bump), zero)
        .unwrap()
        .with_f(coefficient(|_, x, _, _| smooth_bump(x, 2.0)));
    let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
    let sol = solve_obstacle(&spec, &setup.gen, &noise, &[4, 16, 64], 1e-12).unwrap();
    assert!(sol.u.data().iter().all(|&u| u >= -1e-12));
    let report = skorokhod_check(&sol, &spec).unwrap();
    assert!(report.nu_mass < 1e-12, "{report:?}");
    assert!(report.pairing.abs() < 1e-20, "{report:?}");
}

#[test]
fn potential_approximation_increases_to_a_regular_potential() {
    let setup = small_setup(512);
    let semigroup = Semigroup::new(&setup.gen);
    let source = setup.field(|t, x| (1.0 + t) * smooth_bump(x, 1.5));
    let u_bar = semigroup.resolvent_field(&source, 0.0).unwrap();
    let gaps: Vec<f64> = [4u64, 16, 64]
        .iter()
        .map(|&n| {
            let approx = semigroup.potential_approximation(&u_bar, n, 1e-9).unwrap();
            assert!(
                approx.excessive,
                "n = {n}: min source {}",
                approx.min_source
            );
            u_bar
                .zip_with(&approx.u_n, |a, b| a - b)
                .unwrap()
                .data()
                .iter()
                .copied()
                .fold(f64::MIN, f64::max)
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[0] > 0.0);
}

#[test]
fn weak_formulation_holds_for_the_penalized_limit() {
    let setup = Setup::standard(BoundaryRule::ZeroExtension);
    let spec = Fixture::NoisyActive.build(&setup).unwrap();
    let noise = NoisePath::sample(Arc::clone(&setup.times), 1, 7).unwrap();
    let sol = solve_obstacle(&spec, &setup.gen, &noise, &[16, 64, 256], 1e-12).unwrap();
    for (coeffs, center, radius) in [
        (vec![1.0], 0.0, 2.0),
        (vec![0.5, 1.0], 0.5, 1.5),
        (vec![1.0, 0.0, -1.0], -1.0, 3.0),
    ] {
        let phi = TestFunction::new(coeffs, center, radius).unwrap();
        let r = weak_form_residual(&sol.u, &sol.nu, &spec, &setup.gen, &phi, &noise).unwrap();
        assert!(r.residual < 2e-2 * r.scale, "{r:?}");
    }
}

#[test]
fn weak_form_rejects_support_outside_grid() {
    let setup = small_setup(16);
    let spec = Fixture::Inactive.build(&setup).unwrap();
    let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
    let sol = solve_penalized(&spec, &setup.gen, 0, &noise).unwrap();
    let phi = TestFunction::new(vec![1.0], 7.5, 1.0).unwrap();
    assert!(weak_form_residual(
        &sol.field,
        &sol.penalty_mass,
        &spec,
        &setup.gen,
        &phi,
        &noise
    )
    .is_err());
}

#[test]
fn linear_solver_converges_at_first_order_in_time() {
    let grid = Grid::new(8.0, 129, BoundaryRule::Periodic).unwrap();
    let kernel = JumpKernel::new(1.0, 0.25, 4.0).unwrap();
    let errs: Vec<f64> = [32usize, 64, 128]
        .iter()
        .map(|&n_t| {
            let setup = Setup::new(grid, kernel, 1.0, n_t).unwrap();
            let spec =
                ProblemSpec::new(setup.grid.sample(gaussian_bump), setup.inactive_obstacle())
                    .unwrap();
            let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
            let u = solve_penalized(&spec, &setup.gen, 0, &noise).unwrap().field;
            let exact = common::linear_oracle(
                &setup.gen,
                &spec.terminal.values,
                &vec![0.0; 129],
                0.0,
                0.0,
                &setup.times,
            );
            common::relative_sup_l2(&u, &exact)
        })
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 1.0).abs() < 0.15, "{errs:?}");
    }
}

#[test]
fn constant_terminal_value_is_preserved_on_the_torus() {
    let grid = Grid::new(8.0, 129, BoundaryRule::Periodic).unwrap();
    let setup = Setup::new(grid, JumpKernel::new(1.5, 0.25, 4.0).unwrap(), 1.0, 32).unwrap();
    let spec = ProblemSpec::new(
        GridFunction::constant(setup.grid, 2.5),
        setup.inactive_obstacle(),
    )
    .unwrap();
    let u = solve_penalized(
        &spec,
        &setup.gen,
        0,
        &NoisePath::zero(Arc::clone(&setup.times), 0),
    )
    .unwrap()
    .field;
    assert!(u.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
}
