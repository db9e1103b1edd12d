//! Problem fixtures shared by the command-line runs and the test suites.

use std::sync::Arc;

use crate::error::{config, Result};
use crate::ipde::{
    coefficient, BoundaryRule, DiscreteGenerator, Grid, GridFunction, ProblemSpec, SpaceTimeField,
    INACTIVE_OBSTACLE,
};
use crate::levy::{uniform_time_grid, JumpKernel, LevyConfig};

/// Grid, kernel and time grid of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid,
    pub kernel: JumpKernel,
    pub times: Arc<Vec<f64>>,
    pub gen: Arc<DiscreteGenerator>,
    pub levy: Arc<LevyConfig>,
}

impl Setup {
    pub fn new(grid: Grid, kernel: JumpKernel, horizon: f64, n_t: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return config(format!("horizon must be positive, got {horizon}"));
        }
        if n_t == 0 {
            return config("n_t must be at least 1");
        }
        let times = Arc::new(uniform_time_grid(horizon, n_t));
        let gen = Arc::new(DiscreteGenerator::new(grid, kernel)?);
        let levy = Arc::new(LevyConfig::new(1, kernel, times.to_vec())?);
        Ok(Self {
            grid,
            kernel,
            times,
            gen,
            levy,
        })
    }

    /// `L = 16`, `n_x = 257`, `alpha = 1`, `eps_trunc = 0.25`, `z_max = 4`, `T = 1`, `n_t = 256`.
    pub fn standard(boundary: BoundaryRule) -> Self {
        let grid = Grid::new(16.0, 257, boundary).expect("valid grid");
        let kernel = JumpKernel::new(1.0, 0.25, 4.0).expect("valid kernel");
        Self::new(grid, kernel, 1.0, 256).expect("valid setup")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn field(&self, f: impl Fn(f64, f64) -> f64) -> SpaceTimeField {
        SpaceTimeField::from_fn(self.grid, Arc::clone(&self.times), f)
    }

    pub fn inactive_obstacle(&self) -> SpaceTimeField {
        SpaceTimeField::constant(self.grid, Arc::clone(&self.times), INACTIVE_OBSTACLE)
    }
}

/// `exp(-x^2 / 2)`, peak 1 at the origin.
pub fn gaussian_bump(x: f64) -> f64 {
    (-0.5 * x * x).exp()
}

/// Smooth compactly supported bump of height 1 on `|x| < radius`.
pub fn smooth_bump(x: f64, radius: f64) -> f64 {
    let r = x / radius;
    if r.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Named fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// `Phi` and `f = f(t, x)` wide Gaussians, no obstacle, no noise.
    Linear,
    /// Gaussian `Phi`, no source, obstacle never binding.
    Inactive,
    /// `Phi = 0`, `v_t = bump - t/T`: the obstacle lifts the solution.
    Active,
    /// [`Fixture::Active`] with an additive backward noise.
    NoisyActive,
    /// Zero terminal value, smooth nonnegative source: the potential of `int f(X_s) ds`.
    Potential,
    /// Linear problem with jumps and an additive noise, for the representation check.
    Representation,
}

impl Fixture {
    pub const ALL: [Fixture; 6] = [
        Fixture::Linear,
        Fixture::Inactive,
        Fixture::Active,
        Fixture::NoisyActive,
        Fixture::Potential,
        Fixture::Representation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Linear => "linear",
            Fixture::Inactive => "inactive",
            Fixture::Active => "active",
            Fixture::NoisyActive => "noisy-active",
            Fixture::Potential => "potential",
            Fixture::Representation => "representation",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| crate::Error::Config(format!("unknown fixture '{name}'")))
    }

    /// Dimension of the backward noise the fixture is driven by.
    pub fn noise_dim(self) -> usize {
        match self {
            Fixture::NoisyActive | Fixture::Representation => 1,
            _ => 0,
        }
    }

    pub fn build(self, setup: &Setup) -> Result<ProblemSpec> {
        let grid = setup.grid;
        let horizon = setup.horizon();
        match self {
            Fixture::Linear => Ok(ProblemSpec::new(
                grid.sample(|x| (-x * x / 18.0).exp()),
                setup.inactive_obstacle(),
            )?
            .with_f(coefficient(|t, x, _, _| {
                0.5 * (1.0 + 0.2 * t) * (-x * x / 8.0).exp()
            }))),
            Fixture::Inactive => {
                ProblemSpec::new(grid.sample(gaussian_bump), setup.inactive_obstacle())
            }
            Fixture::Active => active(setup, horizon),
            Fixture::NoisyActive => Ok(active(setup, horizon)?
                .with_h(vec![coefficient(|_, x, _, _| 0.2 * (-x * x / 8.0).exp())])),
            Fixture::Potential => Ok(ProblemSpec::new(
                GridFunction::zeros(grid),
                setup.inactive_obstacle(),
            )?
            .with_f(coefficient(|_, x, _, _| smooth_bump(x, 1.5)))),
            Fixture::Representation => Ok(ProblemSpec::new(
                grid.sample(gaussian_bump),
                setup.inactive_obstacle(),
            )?
            .with_f(coefficient(|t, x, _, _| {
                (1.0 - 0.5 * t) * smooth_bump(x, 2.0)
            }))
            .with_h(vec![coefficient(|t, x, _, _| {
                0.3 * (1.0 + t) * (-x * x / 4.0).exp()
            })])),
        }
    }
}

fn active(setup: &Setup, horizon: f64) -> Result<ProblemSpec> {
    let v = setup.field(|t, x| gaussian_bump(x) - t / horizon);
    ProblemSpec::new(GridFunction::zeros(setup.grid), v)
}

/// Source of the potential fixture as a field, for the energy check.
pub fn potential_source(setup: &Setup) -> SpaceTimeField {
    setup.field(|_, x| smooth_bump(x, 1.5))
}

/// Data of the ordered pair used by the comparison check: `B` has a higher terminal value,
/// a larger source and an obstacle raised by 0.1 before the horizon.
pub fn ordered_pair(setup: &Setup) -> Result<(ProblemSpec, ProblemSpec)> {
    let horizon = setup.horizon();
    let a = active(setup, horizon)?;
    let v_b = setup.field(|t, x| gaussian_bump(x) - t / horizon + 0.1);
    let b = ProblemSpec::new(setup.grid.sample(|x| 0.1 * gaussian_bump(x)), v_b)?
        .with_f(coefficient(|_, x, _, _| 0.1 * gaussian_bump(x)));
    Ok((a, b))
}

/// Pair differing only by `Phi_B = Phi_A + 1`; data independent of the solution.
///
/// Needs the periodic rule, under which constants are harmonic.
pub fn shifted_pair(setup: &Setup) -> Result<(ProblemSpec, ProblemSpec)> {
    if setup.grid.boundary() != BoundaryRule::Periodic {
        return config("the shifted pair needs the periodic boundary rule");
    }
    let f = coefficient(|t, x, _, _| (1.0 + t) * gaussian_bump(x));
    let h = vec![coefficient(|_, x, _, _| 0.2 * gaussian_bump(x))];
    let a = ProblemSpec::new(setup.grid.sample(gaussian_bump), setup.inactive_obstacle())?
        .with_f(f.clone())
        .with_h(h.clone());
    let b = ProblemSpec::new(
        setup.grid.sample(|x| gaussian_bump(x) + 1.0),
        setup.inactive_obstacle(),
    )?
    .with_f(f)
    .with_h(h);
    Ok((a, b))
}

/// The killed linear problem `(d_t + A - n) u + f = 0`, `u_T = 0`.
pub fn killed_problem(setup: &Setup, n: u64) -> Result<ProblemSpec> {
    ProblemSpec::new(GridFunction::zeros(setup.grid), setup.inactive_obstacle())?
        .with_f(coefficient(|_, x, _, _| (-x * x / 32.0).exp()))
        .with_discount(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in Fixture::ALL {
            assert_eq!(Fixture::parse(f.name()).unwrap(), f);
        }
        assert!(Fixture::parse("nope").is_err());
    }

    #[test]
    fn every_fixture_builds_on_the_standard_setup() {
        let setup = Setup::standard(BoundaryRule::ZeroExtension);
        for f in Fixture::ALL {
            let spec = f.build(&setup).unwrap();
            assert_eq!(spec.noise_dim(), f.noise_dim());
        }
        ordered_pair(&setup).unwrap();
        assert!(shifted_pair(&setup).is_err());
        shifted_pair(&Setup::standard(BoundaryRule::Periodic)).unwrap();
    }

    #[test]
    fn smooth_bump_shape() {
        assert_eq!(smooth_bump(0.0, 1.5), 1.0);
        assert_eq!(smooth_bump(1.5, 1.5), 0.0);
        assert!(smooth_bump(1.0, 1.5) > 0.0);
    }
}
