use nalgebra::{DMatrix, DVector};

use super::grid::{BoundaryRule, Grid, GridFunction};
use crate::error::{config, Result};
use crate::levy::JumpKernel;

/// The discretized generator `A_h = 1/2 D_h^2 + J_h` on a [`Grid`].
///
/// `J_h` integrates `u(x + y) - u(x)` against `|y|^{-1-alpha}` over the grid shifts `y = k h`,
/// where shift `k` carries the exact kernel mass of the cell `[(k - 1/2) h, (k + 1/2) h]`
/// intersected with `eps_trunc <= |y| <= z_max`.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    grid: Grid,
    kernel: JumpKernel,
    weights: Vec<f64>,
    // Kernel mass beyond the last tabulated shift; only nonzero for an uncapped kernel
    // under zero extension, where such jumps always leave the domain.
    tail_mass: f64,
    matrix: DMatrix<f64>,
    jump_matrix: DMatrix<f64>,
}

impl DiscreteGenerator {
    pub fn new(grid: Grid, kernel: JumpKernel) -> Result<Self> {
        kernel.validate()?;
        let h = grid.spacing();
        let n = grid.len();
        let (weights, tail_mass) = if kernel.enabled {
            if kernel.eps_trunc < h {
                return config(format!(
                    "eps_trunc ({}) is below the grid spacing ({h})",
                    kernel.eps_trunc
                ));
            }
            let k_max = if kernel.z_max.is_finite() {
                (kernel.z_max / h + 0.5).ceil() as usize
            } else if grid.boundary() == BoundaryRule::ZeroExtension {
                n
            } else {
                return config("an uncapped kernel needs the zero-extension rule");
            };
            let mut w = vec![0.0; k_max + 1];
            for (k, wk) in w.iter_mut().enumerate().skip(1) {
                let a = ((k as f64 - 0.5) * h).max(kernel.eps_trunc);
                let b = ((k as f64 + 0.5) * h).min(kernel.z_max);
                if b > a {
                    *wk = kernel.radial_mass(a, b);
                }
            }
            let covered = ((k_max as f64 + 0.5) * h).max(kernel.eps_trunc);
            let tail = if covered < kernel.z_max {
                2.0 * kernel.radial_mass(covered, kernel.z_max)
            } else {
                0.0
            };
            (w, tail)
        } else {
            (vec![0.0], 0.0)
        };

        let mut jump = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = -tail_mass;
            for (k, &w) in weights.iter().enumerate().skip(1) {
                if w == 0.0 {
                    continue;
                }
                for j in [i as isize - k as isize, i as isize + k as isize] {
                    diag -= w;
                    if let Some(j) = target(grid, j) {
                        jump[(i, j)] += w;
                    }
                }
            }
            jump[(i, i)] += diag;
        }

        let mut matrix = jump.clone();
        let c = 0.5 / (h * h);
        for i in 0..n {
            matrix[(i, i)] -= 2.0 * c;
            for j in [i as isize - 1, i as isize + 1] {
                if let Some(j) = target(grid, j) {
                    matrix[(i, j)] += c;
                }
            }
        }
        Ok(Self {
            grid,
            kernel,
            weights,
            tail_mass,
            matrix,
            jump_matrix: jump,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn kernel(&self) -> JumpKernel {
        self.kernel
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The jump part `J_h` alone.
    pub fn jump_matrix(&self) -> &DMatrix<f64> {
        &self.jump_matrix
    }

    /// Kernel mass attached to the shift `k * h`, per sign; index 0 is unused.
    pub fn jump_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(values))
            .as_slice()
            .to_vec()
    }

    pub fn apply_jump(&self, values: &[f64]) -> Vec<f64> {
        (&self.jump_matrix * DVector::from_column_slice(values))
            .as_slice()
            .to_vec()
    }

    /// The Dirichlet form `E(u, w) = E1 + E2` by direct summation over differences.
    ///
    /// `E1 = 1/2 sum (Du)(Dw) h` over forward differences, including the differences across
    /// the boundary; `E2` is the double sum of `(u(x) - u(y)) (w(x) - w(y))` against the same
    /// shift weights as `J_h`, with the symmetric factor 1/2. Out-of-domain partners are counted
    /// from both sides, so the pair carries the full weight.
    pub fn dirichlet_energy(&self, u: &[f64], w: &[f64]) -> f64 {
        let g = self.grid;
        let h = g.spacing();
        let n = g.len() as isize;
        let edges = match g.boundary() {
            BoundaryRule::Periodic => 0..n,
            BoundaryRule::ZeroExtension => -1..n,
        };
        let local: f64 = edges
            .map(|i| {
                (g.extended(u, i + 1) - g.extended(u, i))
                    * (g.extended(w, i + 1) - g.extended(w, i))
            })
            .sum::<f64>()
            * 0.5
            / h;

        let mut nonlocal = 0.0;
        for i in 0..n {
            let (ui, wi) = (u[i as usize], w[i as usize]);
            let mut acc = self.tail_mass * ui * wi;
            for (k, &wk) in self.weights.iter().enumerate().skip(1) {
                if wk == 0.0 {
                    continue;
                }
                for j in [i - k as isize, i + k as isize] {
                    let outside =
                        g.boundary() == BoundaryRule::ZeroExtension && !(0..n).contains(&j);
                    let factor = if outside { 1.0 } else { 0.5 };
                    acc += factor * wk * (ui - g.extended(u, j)) * (wi - g.extended(w, j));
                }
            }
            nonlocal += acc;
        }
        local + h * nonlocal
    }

    pub fn energy(&self, u: &GridFunction) -> f64 {
        self.dirichlet_energy(&u.values, &u.values)
    }
}

fn target(grid: Grid, j: isize) -> Option<usize> {
    let n = grid.len() as isize;
    match grid.boundary() {
        BoundaryRule::Periodic => Some(j.rem_euclid(n) as usize),
        BoundaryRule::ZeroExtension => (0..n).contains(&j).then_some(j as usize),
    }
}
