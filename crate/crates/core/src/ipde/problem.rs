use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::{GridFunction, SpaceTimeField};
use crate::error::{config, Result};
use crate::levy::validate_time_grid;
use crate::rng::{stream_rng, Stream};

/// A coefficient `(t, x, y, z) -> real`, where `y` is the solution value and `z` its gradient.
pub type Coefficient = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

pub fn coefficient(f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Coefficient {
    Arc::new(f)
}

/// Value used for an obstacle that never binds.
pub const INACTIVE_OBSTACLE: f64 = -1.0e6;

/// Data of the obstacle problem: terminal value, drift `f`, noise coefficients `h`,
/// obstacle `v` and the structural constants.
///
/// The obstacle field fixes the time grid of every solve.
#[derive(Clone)]
pub struct ProblemSpec {
    pub terminal: GridFunction,
    pub f: Coefficient,
    /// One coefficient per component of the backward noise.
    pub h: Vec<Coefficient>,
    pub obstacle: SpaceTimeField,
    /// Lipschitz constant of `f` and `h` in `y`.
    pub lipschitz: f64,
    /// Contraction constant of `h` in `z`; must satisfy `beta^2 < 1`.
    pub beta: f64,
    /// Killing rate `kappa` of an extra `-kappa u` term, treated implicitly.
    pub discount: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("terminal", &self.terminal)
            .field("noise_dim", &self.h.len())
            .field("lipschitz", &self.lipschitz)
            .field("beta", &self.beta)
            .field("discount", &self.discount)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Zero drift, no noise, `C = 1`, `beta = 0`.
    pub fn new(terminal: GridFunction, obstacle: SpaceTimeField) -> Result<Self> {
        let spec = Self {
            terminal,
            f: coefficient(|_, _, _, _| 0.0),
            h: Vec::new(),
            obstacle,
            lipschitz: 1.0,
            beta: 0.0,
            discount: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_f(mut self, f: Coefficient) -> Self {
        self.f = f;
        self
    }

    pub fn with_h(mut self, h: Vec<Coefficient>) -> Self {
        self.h = h;
        self
    }

    pub fn with_constants(mut self, lipschitz: f64, beta: f64) -> Result<Self> {
        self.lipschitz = lipschitz;
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }

    pub fn with_obstacle(mut self, obstacle: SpaceTimeField) -> Result<Self> {
        self.obstacle = obstacle;
        self.validate()?;
        Ok(self)
    }

    pub fn with_terminal(mut self, terminal: GridFunction) -> Result<Self> {
        self.terminal = terminal;
        self.validate()?;
        Ok(self)
    }

    pub fn times(&self) -> &Arc<Vec<f64>> {
        self.obstacle.times()
    }

    pub fn horizon(&self) -> f64 {
        *self.times().last().expect("validated non-empty")
    }

    pub fn noise_dim(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        validate_time_grid(self.times())?;
        if self.terminal.grid != self.obstacle.grid() {
            return config("terminal value and obstacle live on different grids");
        }
        if !(self.beta * self.beta < 1.0) {
            return config(format!(
                "contraction constant must satisfy beta^2 < 1, got beta = {}",
                self.beta
            ));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return config(format!(
                "Lipschitz constant must be finite and nonnegative, got {}",
                self.lipschitz
            ));
        }
        if !(self.discount >= 0.0 && self.discount.is_finite()) {
            return config(format!(
                "discount must be finite and nonnegative, got {}",
                self.discount
            ));
        }
        let last = self.obstacle.slice(self.obstacle.n_times() - 1);
        if let Some(i) = last
            .iter()
            .zip(&self.terminal.values)
            .position(|(v, p)| v > p)
        {
            return config(format!(
                "obstacle exceeds the terminal value at node {i}: {} > {}",
                last[i], self.terminal.values[i]
            ));
        }
        Ok(())
    }
}

/// Increments of the backward noise `B` over the intervals of a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    times: Arc<Vec<f64>>,
    dim: usize,
    increments: Vec<f64>,
    seed: Option<u64>,
}

impl NoisePath {
    /// Independent `N(0, dt_i I)` increments from the noise stream of `seed`.
    pub fn sample(times: Arc<Vec<f64>>, dim: usize, seed: u64) -> Result<Self> {
        validate_time_grid(&times)?;
        let mut rng = stream_rng(seed, Stream::Noise);
        let mut increments = Vec::with_capacity((times.len() - 1) * dim);
        for w in times.windows(2) {
            let sd = (w[1] - w[0]).sqrt();
            for _ in 0..dim {
                increments.push(sd * rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok(Self {
            times,
            dim,
            increments,
            seed: Some(seed),
        })
    }

    pub fn zero(times: Arc<Vec<f64>>, dim: usize) -> Self {
        let increments = vec![0.0; (times.len() - 1) * dim];
        Self {
            times,
            dim,
            increments,
            seed: None,
        }
    }

    /// The path `-B`.
    pub fn negated(&self) -> Self {
        Self {
            times: Arc::clone(&self.times),
            dim: self.dim,
            increments: self.increments.iter().map(|x| -x).collect(),
            seed: None,
        }
    }

    pub fn times(&self) -> &Arc<Vec<f64>> {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `B_{t_{i+1}} - B_{t_i}`.
    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }
}
