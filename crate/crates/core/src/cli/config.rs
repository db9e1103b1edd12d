//! Run configuration, read from TOML. Missing keys take the values of `defaults.toml`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::fixtures::{Fixture, Setup};
use crate::ipde::{BoundaryRule, Grid, NoisePath, ProblemSpec};
use crate::levy::{uniform_time_grid, Interval, JumpKernel, LevyConfig};
use crate::rng::derive_seed;

/// The reference configuration, with every key at its default.
pub const DEFAULTS: &str = include_str!("defaults.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevySection {
    pub dim: usize,
    pub alpha: f64,
    pub eps_trunc: f64,
    pub z_max: f64,
    pub jumps: bool,
}

impl Default for LevySection {
    fn default() -> Self {
        Self {
            dim: 1,
            alpha: 1.0,
            eps_trunc: 0.25,
            z_max: 4.0,
            jumps: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    ZeroExtension,
    Periodic,
}

impl From<Boundary> for BoundaryRule {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::ZeroExtension => BoundaryRule::ZeroExtension,
            Boundary::Periodic => BoundaryRule::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub n_x: usize,
    pub boundary: Boundary,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_width: 16.0,
            n_x: 257,
            boundary: Boundary::ZeroExtension,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub n_t: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_t: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub dim: usize,
    pub paths: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { dim: 1, paths: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub fixture: String,
    pub schedule: Vec<u64>,
    pub tol: f64,
    pub lipschitz: f64,
    pub beta: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            fixture: "noisy-active".into(),
            schedule: vec![4, 8, 16, 32, 64, 128, 256],
            tol: 0.1,
            lipschitz: 1.0,
            beta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub paths: usize,
    pub start_half_width: f64,
    pub export_paths: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            paths: 10_000,
            start_half_width: 10.0,
            export_paths: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: String,
    pub plots: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            out: "ospde-out".into(),
            plots: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub levy: LevySection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub monte_carlo: MonteCarloSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses and validates. Syntax errors and unknown keys are reported with their location.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Re-runs every module precondition the configuration can violate.
    pub fn validate(&self) -> Result<()> {
        let kernel = self.kernel()?;
        LevyConfig::new(self.levy.dim, kernel, self.times()?.to_vec())?;
        crate::ipde::DiscreteGenerator::new(self.spatial_grid()?, kernel)?;
        let fixture = self.fixture()?;
        if fixture.noise_dim() != 0 && self.noise.dim != 0 && self.noise.dim != fixture.noise_dim()
        {
            return config(format!(
                "noise.dim = {} but fixture '{}' is driven by a noise of dimension {}; use 0 or {}",
                self.noise.dim,
                fixture.name(),
                fixture.noise_dim(),
                fixture.noise_dim()
            ));
        }
        if self.noise.paths == 0 {
            return config("noise.paths must be at least 1");
        }
        let s = &self.solver;
        if s.schedule.is_empty() {
            return config("solver.schedule must not be empty");
        }
        if s.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return config(format!(
                "solver.schedule must be strictly increasing: {:?}",
                s.schedule
            ));
        }
        let dt = self.time.horizon / self.time.n_t as f64;
        let n_max = *s.schedule.last().expect("nonempty");
        if n_max as f64 * dt > 1.0 + 1e-12 {
            return config(format!(
                "penalty level {n_max} with step {dt} violates n * dt <= 1"
            ));
        }
        if !(s.tol > 0.0) {
            return config(format!("solver.tol must be positive, got {}", s.tol));
        }
        if !(s.beta * s.beta < 1.0) {
            return config(format!(
                "solver.beta must satisfy beta^2 < 1, got {}",
                s.beta
            ));
        }
        if !(s.lipschitz >= 0.0 && s.lipschitz.is_finite()) {
            return config(format!(
                "solver.lipschitz must be finite and nonnegative, got {}",
                s.lipschitz
            ));
        }
        self.start_box()?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<JumpKernel> {
        let k = JumpKernel::new(self.levy.alpha, self.levy.eps_trunc, self.levy.z_max)?;
        Ok(if self.levy.jumps { k } else { k.disabled() })
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            return config(format!("time.horizon must be positive, got {}", t.horizon));
        }
        if t.n_t == 0 {
            return config("time.n_t must be at least 1");
        }
        Ok(uniform_time_grid(t.horizon, t.n_t))
    }

    fn spatial_grid(&self) -> Result<Grid> {
        Grid::new(
            self.grid.half_width,
            self.grid.n_x,
            self.grid.boundary.into(),
        )
    }

    pub fn levy_config(&self) -> Result<Arc<LevyConfig>> {
        Ok(Arc::new(LevyConfig::new(
            self.levy.dim,
            self.kernel()?,
            self.times()?,
        )?))
    }

    /// Grid, generator and time grid for the one-dimensional solver.
    pub fn setup(&self) -> Result<Setup> {
        if self.levy.dim != 1 {
            return config(format!(
                "the solver is one-dimensional; levy.dim = {}",
                self.levy.dim
            ));
        }
        Setup::new(
            self.spatial_grid()?,
            self.kernel()?,
            self.time.horizon,
            self.time.n_t,
        )
    }

    pub fn fixture(&self) -> Result<Fixture> {
        Fixture::parse(&self.solver.fixture)
    }

    /// The configured fixture with the configured constants; the noise term is dropped
    /// when `noise.dim = 0`.
    pub fn problem(&self, setup: &Setup) -> Result<ProblemSpec> {
        self.problem_for(self.fixture()?, setup)
    }

    pub fn problem_for(&self, fixture: Fixture, setup: &Setup) -> Result<ProblemSpec> {
        let spec = fixture
            .build(setup)?
            .with_constants(self.solver.lipschitz, self.solver.beta)?;
        Ok(if self.noise.dim == 0 {
            spec.with_h(Vec::new())
        } else {
            spec
        })
    }

    /// Noise realizations `0..noise.paths`, each of the problem's noise dimension.
    pub fn noises(&self, setup: &Setup, dim: usize) -> Result<Vec<NoisePath>> {
        (0..self.noise.paths as u64)
            .map(|m| {
                NoisePath::sample(Arc::clone(&setup.times), dim, derive_seed(self.run.seed, m))
            })
            .collect()
    }

    pub fn start_box(&self) -> Result<Interval> {
        Interval::symmetric(self.monte_carlo.start_half_width)
    }

    /// Root seed of the path family used by one task.
    pub fn path_seed(&self, task: u64) -> u64 {
        derive_seed(self.run.seed, 1_000 + task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_file_lists_the_defaults() {
        let parsed = RunConfig::from_toml(DEFAULTS).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.levy.z_max = f64::INFINITY;
        cfg.grid.boundary = Boundary::ZeroExtension;
        cfg.solver.schedule = vec![3, 9, 27];
        cfg.run.seed = u64::MAX / 3;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_inherit_defaults() {
        let cfg = RunConfig::from_toml("[time]\nn_t = 512\n").unwrap();
        assert_eq!(cfg.time.n_t, 512);
        assert_eq!(cfg.grid, GridSection::default());
    }

    #[test]
    fn errors_name_the_offending_key() {
        let e = RunConfig::from_toml("[grid]\nnx = 5\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("nx"), "{e}");
        assert!(e.contains("line 2"), "{e}");
        let e = RunConfig::from_toml("[time]\nn_t = \"many\"\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("n_t"), "{e}");
    }

    #[test]
    fn module_preconditions_are_rechecked() {
        let bad = [
            "[solver]\nbeta = 1.0\n",
            "[solver]\nschedule = [4, 512]\n",
            "[solver]\nschedule = [8, 4]\n",
            "[solver]\nfixture = \"nope\"\n",
            "[levy]\neps_trunc = 0.05\nz_max = 4.0\n",
            "[levy]\nalpha = 2.5\n",
            "[grid]\nn_x = 256\n",
            "[noise]\ndim = 3\n",
            "[grid]\nboundary = \"periodic\"\n[levy]\nz_max = inf\n",
        ];
        for text in bad {
            assert!(
                matches!(RunConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }
}
