//! The quadruple `(Y, Z, U, K)` obtained by reading a solution field along sampled paths,
//! and the Monte Carlo checks built on it.
//!
//! Expectations under the Lebesgue measure `E^m` are realized by starting paths uniformly on a
//! box and multiplying sample means by the box volume.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{config, Error, Result};
use crate::ipde::{trapezoid, DiscreteGenerator, NoisePath, ProblemSpec, SpaceTimeField};
use crate::levy::{Interval, LevyPath};
use crate::stats::MeanEstimate;

/// Minimum number of usable paths for the statistical checks.
pub const MIN_SAMPLES: usize = 1000;

/// Value of `u(tau, X_{tau-} + z) - u(tau, X_{tau-})` at one jump.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpValue {
    pub time: f64,
    /// Index `i` of the grid interval `(t_i, t_{i+1}]` containing the jump.
    pub step: usize,
    pub value: f64,
}

/// `(Y, Z, U, K)` and the obstacle `S` along one path, at the nodes of the time grid.
#[derive(Debug, Clone)]
pub struct BdsdeSample {
    pub path: Arc<LevyPath>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub jumps: Vec<JumpValue>,
    /// `K_0 = 0`, `K_{i+1} = K_i + n (Y_{i+1} - S_{i+1})^- dt_i`.
    pub k: Vec<f64>,
    pub s: Vec<f64>,
    /// `sup ((Y - S)^-)^2` over the grid nodes and the left limits at jumps.
    pub sup_negative_part_sq: f64,
    /// The path left `[-L, L]` at a grid time or across a jump.
    pub escaped: bool,
}

/// Precomputed gradients of a field, shared by all paths.
struct FieldView<'a> {
    field: &'a SpaceTimeField,
    grad: SpaceTimeField,
    obstacle: &'a SpaceTimeField,
    level: f64,
}

impl<'a> FieldView<'a> {
    fn new(field: &'a SpaceTimeField, spec: &'a ProblemSpec, n: u64) -> Result<Self> {
        field.check_same_layout(&spec.obstacle)?;
        let grid = field.grid();
        let mut grad = SpaceTimeField::zeros(grid, Arc::clone(field.times()));
        for k in 0..field.n_times() {
            let g = grid.gradient(field.slice(k));
            grad.slice_mut(k).copy_from_slice(&g);
        }
        Ok(Self {
            field,
            grad,
            obstacle: &spec.obstacle,
            level: n as f64,
        })
    }

    fn u(&self, k: usize, x: f64) -> f64 {
        self.field.grid().interpolate(self.field.slice(k), x)
    }

    fn evaluate(&self, path: &Arc<LevyPath>) -> Result<BdsdeSample> {
        let times = self.field.times();
        if path.config().t_grid != **times {
            return config("path and field use different time grids");
        }
        if path.config().dim != 1 {
            return config("fields are one-dimensional");
        }
        let grid = self.field.grid();
        let n_t = times.len();
        let mut escaped = false;
        let mut y = Vec::with_capacity(n_t);
        let mut z = Vec::with_capacity(n_t);
        let mut s = Vec::with_capacity(n_t);
        let mut sup_neg: f64 = 0.0;
        for k in 0..n_t {
            let x = path.position_at_index_1d(k);
            escaped |= !grid.contains(x);
            let yk = self.u(k, x);
            let sk = grid.interpolate(self.obstacle.slice(k), x);
            sup_neg = sup_neg.max((sk - yk).max(0.0).powi(2));
            y.push(yk);
            z.push(grid.interpolate(self.grad.slice(k), x));
            s.push(sk);
        }
        let mut jumps = Vec::with_capacity(path.jumps().len());
        for jump in path.jumps() {
            let step = times.partition_point(|&t| t < jump.time) - 1;
            let before = path.left_limit_1d(jump.time);
            let after = before + jump.z[0];
            escaped |= !grid.contains(before) || !grid.contains(after);
            let u_before = self.u(step + 1, before);
            let s_before = grid.interpolate(self.obstacle.slice(step + 1), before);
            sup_neg = sup_neg.max((s_before - u_before).max(0.0).powi(2));
            jumps.push(JumpValue {
                time: jump.time,
                step,
                value: self.u(step + 1, after) - u_before,
            });
        }
        let mut k = vec![0.0; n_t];
        for i in 0..n_t - 1 {
            let dt = times[i + 1] - times[i];
            k[i + 1] = k[i] + self.level * (s[i + 1] - y[i + 1]).max(0.0) * dt;
        }
        Ok(BdsdeSample {
            path: Arc::clone(path),
            y,
            z,
            jumps,
            k,
            s,
            sup_negative_part_sq: sup_neg,
            escaped,
        })
    }
}

/// Reads `field` (the solution at penalty level `n`) along one path.
pub fn evaluate_along_path(
    field: &SpaceTimeField,
    path: &Arc<LevyPath>,
    spec: &ProblemSpec,
    n: u64,
) -> Result<BdsdeSample> {
    FieldView::new(field, spec, n)?.evaluate(path)
}

/// Samples along paths started uniformly on `start_box`.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<BdsdeSample>,
    pub start_box: Interval,
    pub n_escaped: usize,
}

impl SampleSet {
    pub fn evaluate(
        field: &SpaceTimeField,
        paths: &[Arc<LevyPath>],
        spec: &ProblemSpec,
        n: u64,
        start_box: Interval,
    ) -> Result<Self> {
        let view = FieldView::new(field, spec, n)?;
        let samples: Vec<BdsdeSample> = paths
            .par_iter()
            .map(|p| view.evaluate(p))
            .collect::<Result<_>>()?;
        let n_escaped = samples.iter().filter(|s| s.escaped).count();
        Ok(Self {
            samples,
            start_box,
            n_escaped,
        })
    }

    pub fn volume(&self) -> f64 {
        self.start_box.width()
    }

    pub fn active(&self) -> impl Iterator<Item = &BdsdeSample> {
        self.samples.iter().filter(|s| !s.escaped)
    }

    pub fn n_active(&self) -> usize {
        self.samples.len() - self.n_escaped
    }

    pub fn escape_fraction(&self) -> f64 {
        self.n_escaped as f64 / self.samples.len().max(1) as f64
    }

    /// `E^m` of a per-path quantity over the non-escaped paths.
    pub fn lebesgue_mean(&self, f: impl Fn(&BdsdeSample) -> f64) -> MeanEstimate {
        let xs: Vec<f64> = self.active().map(f).collect();
        MeanEstimate::from_slice(&xs).scaled(self.volume())
    }

    fn require(&self, min: usize) -> Result<()> {
        if self.n_active() < min {
            return Err(Error::Refused(format!(
                "{} non-escaped samples, at least {min} required",
                self.n_active()
            )));
        }
        Ok(())
    }

    /// Writes `path_id,t,Y,K,escaped`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["path_id", "t", "Y", "K", "escaped"])?;
        for (id, s) in self.samples.iter().enumerate() {
            for (k, t) in s.path.config().t_grid.iter().enumerate() {
                wtr.write_record([
                    id.to_string(),
                    t.to_string(),
                    s.y[k].to_string(),
                    s.k[k].to_string(),
                    s.escaped.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Mean residual of the representation formula between two grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStat {
    pub s: f64,
    pub t: f64,
    pub estimate: MeanEstimate,
}

impl ResidualStat {
    /// Mean within `k` standard errors of zero.
    pub fn is_centered(&self, k: f64) -> bool {
        self.estimate.within(0.0, k)
    }
}

/// Residual of
/// `u(t, X_t) - u(s, X_s) + int_s^t f dr + int_s^t h dB - int_s^t Z dW - int_s^t int U (N - nu)(dz, dr)`
/// for each pair of grid indices `(a, b)`, `a < b`.
///
/// `f` here is the full drift of the penalized equation, including the penalty and the killing
/// term. On each interval `[t_i, t_{i+1}]` the drift and the noise coefficient are taken from the
/// later level and read at `X_{t_i}`, `Z` is the gradient at `(t_i, X_{t_i})`, and the jump
/// compensator is `dt (J_h u_{i+1})(X_{t_i})`.
pub fn representation_residual(
    set: &SampleSet,
    field: &SpaceTimeField,
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    noise: &NoisePath,
    n: u64,
    pairs: &[(usize, usize)],
) -> Result<Vec<ResidualStat>> {
    set.require(MIN_SAMPLES)?;
    field.check_same_layout(&spec.obstacle)?;
    let times = field.times();
    let n_t = times.len();
    if noise.times() != times {
        return config("noise path and field use different time grids");
    }
    if let Some(&(a, b)) = pairs.iter().find(|(a, b)| !(a < b && *b < n_t)) {
        return config(format!("invalid index pair ({a}, {b})"));
    }
    let grid = field.grid();
    let nf = n as f64;

    // Nodal drift, noise coefficients, jump part and gradient for every level.
    let mut drift = SpaceTimeField::zeros(grid, Arc::clone(times));
    let mut jump = SpaceTimeField::zeros(grid, Arc::clone(times));
    let mut grad = SpaceTimeField::zeros(grid, Arc::clone(times));
    let mut noise_coef: Vec<SpaceTimeField> = spec
        .h
        .iter()
        .map(|_| SpaceTimeField::zeros(grid, Arc::clone(times)))
        .collect();
    for k in 0..n_t {
        let u = field.slice(k);
        let g = grid.gradient(u);
        let v = spec.obstacle.slice(k);
        let t = times[k];
        let d: Vec<f64> = (0..grid.len())
            .map(|j| (spec.f)(t, grid.node(j), u[j], g[j]) + nf * (v[j] - u[j]).max(0.0))
            .collect();
        drift.slice_mut(k).copy_from_slice(&d);
        for (hl, out) in spec.h.iter().zip(noise_coef.iter_mut()) {
            let hv: Vec<f64> = (0..grid.len())
                .map(|j| hl(t, grid.node(j), u[j], g[j]))
                .collect();
            out.slice_mut(k).copy_from_slice(&hv);
        }
        jump.slice_mut(k).copy_from_slice(&gen.apply_jump(u));
        grad.slice_mut(k).copy_from_slice(&g);
    }

    let per_path: Vec<Vec<f64>> = set
        .active()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|sample| {
            let path = &sample.path;
            let mut cum = vec![0.0; n_t];
            let mut jumps = sample.jumps.iter().peekable();
            for i in 0..n_t - 1 {
                let dt = times[i + 1] - times[i];
                let x0 = path.position_at_index_1d(i);
                let x1 = path.position_at_index_1d(i + 1);
                let at = |f: &SpaceTimeField, k: usize, x: f64| grid.interpolate(f.slice(k), x);
                let mut r = at(field, i + 1, x1) - at(field, i, x0) + dt * at(&drift, i + 1, x0)
                    - dt * spec.discount * at(field, i, x0);
                if !spec.h.is_empty() {
                    for (l, coef) in noise_coef.iter().enumerate() {
                        r += at(coef, i + 1, x0) * noise.increment(i)[l];
                    }
                }
                r -= at(&grad, i, x0) * path.brownian_increments()[i];
                let mut jump_sum = 0.0;
                while let Some(j) = jumps.next_if(|j| j.step == i) {
                    jump_sum += j.value;
                }
                r -= jump_sum - dt * at(&jump, i + 1, x0);
                cum[i + 1] = cum[i] + r;
            }
            cum
        })
        .collect();

    let volume = set.volume();
    Ok(pairs
        .iter()
        .map(|&(a, b)| {
            let xs: Vec<f64> = per_path.iter().map(|c| c[b] - c[a]).collect();
            ResidualStat {
                s: times[a],
                t: times[b],
                estimate: MeanEstimate::from_slice(&xs).scaled(volume),
            }
        })
        .collect())
}

/// Both sides of the energy relation of a potential at time `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyIdentity {
    pub t: f64,
    /// `||u_t||^2`.
    pub norm_sq: f64,
    /// `int_t^T E(u_s) ds`.
    pub energy_integral: f64,
    /// `||u_t||^2 + int_t^T E(u_s) ds`.
    pub lhs_as_printed: f64,
    /// `||u_t||^2 + 2 int_t^T E(u_s) ds`, the value of `E^m (A_T - A_t)^2` for the exact potential.
    pub lhs_quadratic_variation: f64,
    /// Monte Carlo `E^m (A_T - A_t)^2`.
    pub rhs: MeanEstimate,
}

impl EnergyIdentity {
    pub fn gap_as_printed(&self) -> f64 {
        relative_gap(self.lhs_as_printed, self.rhs.mean)
    }

    pub fn gap_quadratic_variation(&self) -> f64 {
        relative_gap(self.lhs_quadratic_variation, self.rhs.mean)
    }
}

fn relative_gap(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Energy relation for the potential `u` of the additive functional `A_t = int_0^t f_s(X_s) ds`,
/// i.e. `u` solves the backward equation with source `f`, zero terminal value and no obstacle.
///
/// `A_T - A_t` is integrated along each path by the trapezoid rule on the grid nodes.
pub fn energy_identity_check(
    set: &SampleSet,
    field: &SpaceTimeField,
    source: &SpaceTimeField,
    gen: &DiscreteGenerator,
    k: usize,
) -> Result<EnergyIdentity> {
    field.check_same_layout(source)?;
    let times = field.times();
    if k >= times.len() {
        return config(format!(
            "time index {k} outside a grid of {} nodes",
            times.len()
        ));
    }
    let grid = field.grid();
    let norm_sq = grid.inner(field.slice(k), field.slice(k));
    let energy_integral = crate::ipde::integrated_energy_from(field, gen, k);
    let rhs = set.lebesgue_mean(|s| {
        let vals: Vec<f64> = (k..times.len())
            .map(|j| grid.interpolate(source.slice(j), s.path.position_at_index_1d(j)))
            .collect();
        trapezoid(&times[k..], &vals).powi(2)
    });
    Ok(EnergyIdentity {
        t: times[k],
        norm_sq,
        energy_integral,
        lhs_as_printed: norm_sq + energy_integral,
        lhs_quadratic_variation: norm_sq + 2.0 * energy_integral,
        rhs,
    })
}

/// `E^m int_0^T (Y_s - S_s) dK_s`, summed over the grid increments of `K`.
pub fn pathwise_skorokhod(set: &SampleSet) -> MeanEstimate {
    set.lebesgue_mean(|s| {
        (1..s.k.len())
            .map(|i| (s.y[i] - s.s[i]) * (s.k[i] - s.k[i - 1]))
            .sum()
    })
}

/// `E^m int_0^T phi(s, X_s) dK_s`.
pub fn pathwise_measure_pairing(
    set: &SampleSet,
    phi: impl Fn(f64, f64) -> f64 + Sync,
) -> MeanEstimate {
    set.lebesgue_mean(|s| {
        let t = &s.path.config().t_grid;
        (1..s.k.len())
            .map(|i| phi(t[i], s.path.position_at_index_1d(i)) * (s.k[i] - s.k[i - 1]))
            .sum()
    })
}

/// The four terms bounded by the a priori estimate of the penalized solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionMoments {
    /// `sup_t E^m |Y_t|^2`.
    pub sup_y_sq: f64,
    /// `E^m int_0^T |Z_s|^2 ds`.
    pub z_sq: f64,
    /// `E^m (K_T)^2`.
    pub k_terminal_sq: f64,
    /// `E^m int int |U|^2 nu(dz) ds`, through its compensator identity with the jump sum.
    pub u_sq: f64,
}

impl SolutionMoments {
    pub fn total(&self) -> f64 {
        self.sup_y_sq + self.z_sq + self.k_terminal_sq + self.u_sq
    }
}

pub fn solution_moments(set: &SampleSet) -> Result<SolutionMoments> {
    set.require(1)?;
    let first = set.active().next().expect("checked nonempty");
    let times = first.path.config().t_grid.clone();
    let sup_y_sq = (0..times.len())
        .map(|k| set.lebesgue_mean(|s| s.y[k].powi(2)).mean)
        .fold(0.0, f64::max);
    let z_sq = set.lebesgue_mean(|s| left_riemann(&times, &s.z)).mean;
    let k_terminal_sq = set
        .lebesgue_mean(|s| s.k.last().copied().unwrap_or(0.0).powi(2))
        .mean;
    let u_sq = set
        .lebesgue_mean(|s| s.jumps.iter().map(|j| j.value.powi(2)).sum())
        .mean;
    Ok(SolutionMoments {
        sup_y_sq,
        z_sq,
        k_terminal_sq,
        u_sq,
    })
}

/// `E^m [int |Y^a - Y^b|^2 + int |Z^a - Z^b|^2 + sum |U^a - U^b|^2]` for two sample sets
/// read along the same paths.
pub fn cauchy_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    if a.samples.len() != b.samples.len() {
        return config("sample sets have different sizes");
    }
    let mut terms = Vec::with_capacity(a.samples.len());
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        if !Arc::ptr_eq(&sa.path, &sb.path) {
            return config("sample sets were read along different paths");
        }
        if sa.escaped {
            continue;
        }
        let t = &sa.path.config().t_grid;
        let dy: Vec<f64> = sa.y.iter().zip(&sb.y).map(|(p, q)| p - q).collect();
        let dz: Vec<f64> = sa.z.iter().zip(&sb.z).map(|(p, q)| p - q).collect();
        let du: f64 = sa
            .jumps
            .iter()
            .zip(&sb.jumps)
            .map(|(p, q)| (p.value - q.value).powi(2))
            .sum();
        terms.push(left_riemann(t, &dy) + left_riemann(t, &dz) + du);
    }
    Ok(MeanEstimate::from_slice(&terms).scaled(a.volume()).mean)
}

// sum_i |x_i|^2 (t_{i+1} - t_i)
fn left_riemann(times: &[f64], xs: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(xs)
        .map(|(t, x)| x * x * (t[1] - t[0]))
        .sum()
}
