//! Transition semigroup of the discretized process, its time-space resolvent and the
//! resolvent approximation of potentials.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{config, range, Error, Result};
use crate::ipde::{DiscreteGenerator, Grid, GridFunction, SpaceTimeField};

/// `q_t(x) = (2 pi t)^{-d/2} exp(-|x|^2 / 2t)`.
pub fn heat_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return range(format!("heat kernel needs t > 0, got {t}"));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((2.0 * PI * t).powf(-(x.len() as f64) / 2.0) * (-r2 / (2.0 * t)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Brownian part only; the density is the Gaussian `q_t`.
    GaussianOnly,
    /// Brownian motion plus jumps; no closed form, use [`Semigroup`].
    Full,
}

/// Transition density of the continuum process, where it has a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub dim: usize,
    pub alpha: f64,
    pub eps_trunc: f64,
    pub mode: KernelMode,
}

impl Kernel {
    pub fn density(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return config(format!(
                "point of dimension {} for a kernel in dimension {}",
                x.len(),
                self.dim
            ));
        }
        match self.mode {
            KernelMode::GaussianOnly => heat_kernel(t, x),
            KernelMode::Full => {
                config("the jump-diffusion density has no closed form; use the discrete semigroup")
            }
        }
    }
}

/// `P_t = exp(t A_h)` through the eigendecomposition of the symmetric generator matrix.
#[derive(Debug, Clone)]
pub struct Semigroup {
    grid: Grid,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Semigroup {
    pub fn new(gen: &DiscreteGenerator) -> Self {
        let eig = SymmetricEigen::new(gen.matrix().clone());
        Self {
            grid: gen.grid(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    fn analyze(&self, values: &[f64]) -> DVector<f64> {
        self.eigenvectors
            .tr_mul(&DVector::from_column_slice(values))
    }

    fn synthesize(&self, c: &DVector<f64>) -> Vec<f64> {
        (&self.eigenvectors * c).as_slice().to_vec()
    }

    fn check_grid(&self, grid: Grid) -> Result<()> {
        if grid != self.grid {
            return config("function and semigroup live on different grids");
        }
        Ok(())
    }

    /// `P_t g`.
    pub fn apply(&self, g: &GridFunction, t: f64) -> Result<GridFunction> {
        if !(t >= 0.0) {
            return range(format!("semigroup time must be nonnegative, got {t}"));
        }
        self.check_grid(g.grid)?;
        let mut c = self.analyze(&g.values);
        for (ci, &l) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= (l * t).exp();
        }
        Ok(GridFunction {
            grid: self.grid,
            values: self.synthesize(&c),
        })
    }

    /// Matrix of `P_t`; row `i` holds the transition masses out of node `i`.
    pub fn transition_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return range(format!("semigroup time must be nonnegative, got {t}"));
        }
        let scaled = DMatrix::from_fn(self.grid.len(), self.grid.len(), |i, j| {
            self.eigenvectors[(i, j)] * (self.eigenvalues[j] * t).exp()
        });
        Ok(scaled * self.eigenvectors.transpose())
    }

    /// `(U_a psi)_{t_k} = int_{t_k}^T e^{-a (s - t_k)} P_{s - t_k} psi_s ds` for every node `t_k`.
    ///
    /// `psi` is interpolated linearly in time between nodes and each eigenmode is integrated
    /// exactly against `e^{(lambda - a) s}`, so the quadrature stays accurate when `a dt` is
    /// not small.
    pub fn resolvent_field(&self, psi: &SpaceTimeField, rate: f64) -> Result<SpaceTimeField> {
        if !(rate >= 0.0) {
            return range(format!("resolvent rate must be nonnegative, got {rate}"));
        }
        self.check_grid(psi.grid())?;
        let times = psi.times();
        let n_t = times.len();
        let coeffs: Vec<DVector<f64>> = (0..n_t).map(|j| self.analyze(psi.slice(j))).collect();
        let decay: Vec<f64> = self.eigenvalues.iter().map(|l| l - rate).collect();
        // interval j: weights of psi_j and psi_{j+1} per mode
        let weights: Vec<Vec<(f64, f64)>> = times
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                decay
                    .iter()
                    .map(|&c| linear_exponential_weights(c, h))
                    .collect()
            })
            .collect();
        let mut out = SpaceTimeField::zeros(self.grid, Arc::clone(times));
        for k in 0..n_t.saturating_sub(1) {
            let mut acc = DVector::zeros(self.grid.len());
            for j in k..n_t - 1 {
                let s = times[j] - times[k];
                for (m, a) in acc.iter_mut().enumerate() {
                    let (w0, w1) = weights[j][m];
                    *a += (decay[m] * s).exp() * (w0 * coeffs[j][m] + w1 * coeffs[j + 1][m]);
                }
            }
            out.slice_mut(k).copy_from_slice(&self.synthesize(&acc));
        }
        Ok(out)
    }

    /// `(U_a psi)_t` at a node `t` of the field's time grid.
    pub fn resolvent(&self, psi: &SpaceTimeField, rate: f64, t: f64) -> Result<GridFunction> {
        let k = node_index(psi.times(), t)?;
        Ok(self.resolvent_field(psi, rate)?.at(k))
    }

    /// `f_n = n (u - n U_n u)` and `u_n = U_0 f_n`.
    ///
    /// Time discretization errors in `f_n` grow like `n^2`; the sign test behind `excessive`
    /// is only meaningful when `n dt` is well below 1.
    pub fn potential_approximation(
        &self,
        u_bar: &SpaceTimeField,
        n: u64,
        tol: f64,
    ) -> Result<PotentialApproximation> {
        if n == 0 {
            return config("approximation level must be at least 1");
        }
        let nf = n as f64;
        let r = self.resolvent_field(u_bar, nf)?;
        let f_n = u_bar.zip_with(&r, |u, ru| nf * (u - nf * ru))?;
        let u_n = self.resolvent_field(&f_n, 0.0)?;
        let min_source = f_n.data().iter().copied().fold(f64::INFINITY, f64::min);
        let min_value = u_bar.data().iter().copied().fold(f64::INFINITY, f64::min);
        let excessive = min_source >= -tol && min_value >= -tol;
        Ok(PotentialApproximation {
            level: n,
            f_n,
            u_n,
            min_source,
            excessive,
        })
    }
}

/// Result of the resolvent approximation of a candidate potential.
#[derive(Debug, Clone)]
pub struct PotentialApproximation {
    pub level: u64,
    pub f_n: SpaceTimeField,
    pub u_n: SpaceTimeField,
    pub min_source: f64,
    /// False when `f_n` or the candidate itself dips below `-tol`.
    pub excessive: bool,
}

/// `(int_0^h e^{c r} (1 - r/h) dr, int_0^h e^{c r} r/h dr)`.
fn linear_exponential_weights(c: f64, h: f64) -> (f64, f64) {
    let x = c * h;
    let (phi1, phi2) = if x.abs() < 1e-2 {
        (
            1.0 + x / 2.0 + x * x / 6.0 + x.powi(3) / 24.0 + x.powi(4) / 120.0,
            0.5 + x / 3.0 + x * x / 8.0 + x.powi(3) / 30.0 + x.powi(4) / 144.0,
        )
    } else {
        let e = x.exp();
        ((e - 1.0) / x, (e * (x - 1.0) + 1.0) / (x * x))
    };
    (h * (phi1 - phi2), h * phi2)
}

fn node_index(times: &[f64], t: f64) -> Result<usize> {
    let horizon = *times.last().expect("nonempty time grid");
    if t > horizon || t < 0.0 {
        return range(format!("time {t} outside [0, {horizon}]"));
    }
    let scale = horizon.max(1.0);
    times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * scale)
        .ok_or_else(|| Error::Range(format!("time {t} is not a node of the time grid")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipde::BoundaryRule;
    use crate::levy::{uniform_time_grid, JumpKernel};

    fn setup(rule: BoundaryRule, jumps: bool) -> (DiscreteGenerator, Semigroup) {
        let grid = Grid::new(4.0, 33, rule).unwrap();
        let mut k = JumpKernel::new(1.0, 0.25, 2.0).unwrap();
        k.enabled = jumps;
        let gen = DiscreteGenerator::new(grid, k).unwrap();
        let sg = Semigroup::new(&gen);
        (gen, sg)
    }

    // exp(tA) by scaling and squaring of a Taylor series.
    fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let norm = a.abs().row_sum().max() * t;
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let m = a * (t / 2f64.powi(s));
        let n = a.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &m / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, &[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(
            heat_kernel(0.3, &[1.2]).unwrap(),
            heat_kernel(0.3, &[-1.2]).unwrap()
        );
        assert!(matches!(heat_kernel(0.0, &[0.0]), Err(Error::Range(_))));
        let h = 1e-3;
        let mass: f64 = (-20_000..=20_000)
            .map(|i| heat_kernel(0.7, &[i as f64 * h]).unwrap() * h)
            .sum();
        assert!((mass - 1.0).abs() < 1e-6);
        let k = Kernel {
            dim: 1,
            alpha: 1.0,
            eps_trunc: 0.1,
            mode: KernelMode::Full,
        };
        assert!(k.density(1.0, &[0.0]).is_err());
    }

    #[test]
    fn semigroup_matches_taylor_exponential() {
        let (gen, sg) = setup(BoundaryRule::ZeroExtension, true);
        let g = sg.grid().sample(|x| (-x * x).exp());
        let oracle = expm(gen.matrix(), 0.7) * DVector::from_column_slice(&g.values);
        let got = sg.apply(&g, 0.7).unwrap();
        for (a, b) in got.values.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn conservative_positive_contractive() {
        let (_, sg) = setup(BoundaryRule::Periodic, true);
        let one = GridFunction::constant(sg.grid(), 1.0);
        for v in sg.apply(&one, 1.0).unwrap().values {
            assert!((v - 1.0).abs() < 1e-10);
        }
        let g = sg.grid().sample(|x| if x.abs() < 1.0 { 1.0 } else { 0.0 });
        for t in [0.1, 1.0] {
            let pg = sg.apply(&g, t).unwrap();
            assert!(pg.values.iter().all(|&v| v >= -1e-12));
            assert!(pg.norm() <= g.norm() + 1e-12);
        }
        assert_eq!(sg.apply(&g, 0.0).unwrap().values.len(), g.values.len());
        assert!(sg.apply(&g, -1.0).is_err());
    }

    #[test]
    fn semigroup_property_and_continuity() {
        let (_, sg) = setup(BoundaryRule::ZeroExtension, true);
        let g = sg.grid().sample(|x| (1.0 - x * x / 4.0).max(0.0));
        let direct = sg.apply(&g, 0.9).unwrap();
        let composed = sg.apply(&sg.apply(&g, 0.4).unwrap(), 0.5).unwrap();
        for (a, b) in direct.values.iter().zip(&composed.values) {
            assert!((a - b).abs() < 1e-8);
        }
        let gaps: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&t| {
                let p = sg.apply(&g, t).unwrap();
                let d: Vec<f64> = p.values.iter().zip(&g.values).map(|(a, b)| a - b).collect();
                sg.grid().norm(&d)
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    }

    #[test]
    fn resolvent_of_constant_on_conservative_grid() {
        let (_, sg) = setup(BoundaryRule::Periodic, true);
        let times = Arc::new(uniform_time_grid(2.0, 16));
        let psi = SpaceTimeField::constant(sg.grid(), times, 3.0);
        let r = sg.resolvent(&psi, 0.0, 0.5).unwrap();
        assert!((r.values[sg.grid().center()] - 1.5 * 3.0).abs() < 1e-9);
        assert!(sg.resolvent(&psi, 0.0, 2.5).is_err());
        assert!(sg.resolvent(&psi, 0.0, 0.3).is_err());
        let zero = SpaceTimeField::zeros(sg.grid(), Arc::new(uniform_time_grid(2.0, 16)));
        assert_eq!(sg.resolvent(&zero, 1.0, 0.0).unwrap().values, vec![0.0; 33]);
    }

    #[test]
    fn resolvent_matches_dense_quadrature() {
        let (gen, sg) = setup(BoundaryRule::ZeroExtension, true);
        let times = Arc::new(uniform_time_grid(1.0, 8));
        let psi = SpaceTimeField::from_fn(sg.grid(), Arc::clone(&times), |t, x| {
            (1.0 + t * t) * (-x * x).exp()
        });
        let rate = 3.0;
        let r = sg.resolvent(&psi, rate, 0.25).unwrap();
        // composite Simpson on each interval, psi interpolated linearly, Taylor-exponential transitions
        let mut oracle = DVector::zeros(33);
        let sub = 64;
        for j in 2..8 {
            let (t0, t1) = (times[j], times[j + 1]);
            let (p0, p1) = (
                DVector::from_column_slice(psi.slice(j)),
                DVector::from_column_slice(psi.slice(j + 1)),
            );
            let h = (t1 - t0) / sub as f64;
            for q in 0..=sub {
                let w = if q == 0 || q == sub {
                    1.0
                } else if q % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let theta = q as f64 / sub as f64;
                let s = t0 + theta * (t1 - t0) - 0.25;
                let p = &p0 * (1.0 - theta) + &p1 * theta;
                oracle += expm(gen.matrix(), s) * p * (w * h / 3.0 * (-rate * s).exp());
            }
        }
        for (a, b) in r.values.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn exponential_weights_match_series_at_the_switch() {
        let (w0, w1) = linear_exponential_weights(-1e-2 - 1e-12, 0.5);
        let (s0, s1) = linear_exponential_weights(-1e-2 + 1e-12, 0.5);
        assert!((w0 - s0).abs() < 1e-12 && (w1 - s1).abs() < 1e-12);
        let (w0, w1) = linear_exponential_weights(0.0, 2.0);
        assert!((w0 - 1.0).abs() < 1e-15 && (w1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resolvent_equation() {
        let (_, sg) = setup(BoundaryRule::ZeroExtension, true);
        let times = Arc::new(uniform_time_grid(1.0, 256));
        let u = SpaceTimeField::from_fn(sg.grid(), Arc::clone(&times), |t, x| {
            (1.0 - t) * (-x * x).exp()
        });
        let a = 8.0;
        let ua = sg.resolvent_field(&u, a).unwrap();
        let lhs = ua.map(|v| a * v);
        let inner = u.zip_with(&lhs, |x, y| x - y).unwrap();
        let rhs = sg.resolvent_field(&inner, 0.0).unwrap().map(|v| a * v);
        let err = lhs.zip_with(&rhs, |x, y| x - y).unwrap().sup_norm();
        assert!(err < 1e-5, "resolvent equation error {err}");
    }

    #[test]
    fn potential_approximation_flags_negative_fields() {
        let (_, sg) = setup(BoundaryRule::ZeroExtension, true);
        let times = Arc::new(uniform_time_grid(1.0, 32));
        let zero = SpaceTimeField::zeros(sg.grid(), Arc::clone(&times));
        let p = sg.potential_approximation(&zero, 4, 1e-9).unwrap();
        assert!(p.excessive);
        assert_eq!(p.f_n.sup_norm(), 0.0);
        assert_eq!(p.u_n.sup_norm(), 0.0);
        let neg = SpaceTimeField::constant(sg.grid(), times, -1.0);
        assert!(!sg.potential_approximation(&neg, 4, 1e-9).unwrap().excessive);
        assert!(sg.potential_approximation(&zero, 0, 1e-9).is_err());
    }
}
