//! Simulation of the symmetric jump-diffusion `X = x0 + W + jumps`.
//!
//! The jump part is a compound Poisson process whose Lévy measure is the
//! kernel `|z|^{-(d+alpha)} dz` restricted to `eps_trunc <= |z| <= z_max`.
//! Jumps below the truncation radius are dropped; no compensating drift is
//! added because the kernel is symmetric and its compensator over any
//! symmetric shell vanishes.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{self, range, Error, Result};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::stats::{chi_square_gof, correlation, ks_uniform, sign_test, GofReport};

/// Closed interval `[lo, hi]` of the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return error::config(format!("invalid interval [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(half_width: f64) -> Result<Self> {
        Self::new(-half_width, half_width)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// The truncated jump kernel `|z|^{-(d+alpha)}` on `eps_trunc <= |z| <= z_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpKernel {
    pub alpha: f64,
    pub eps_trunc: f64,
    /// May be `f64::INFINITY`.
    pub z_max: f64,
    /// When false the jump channel is switched off entirely.
    pub enabled: bool,
}

impl JumpKernel {
    pub fn new(alpha: f64, eps_trunc: f64, z_max: f64) -> Result<Self> {
        let k = Self {
            alpha,
            eps_trunc,
            z_max,
            enabled: true,
        };
        k.validate()?;
        Ok(k)
    }

    /// Same parameters, jump channel off.
    pub fn disabled(self) -> Self {
        Self {
            enabled: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return error::config(format!("alpha must lie in (0, 2), got {}", self.alpha));
        }
        if !(self.eps_trunc > 0.0 && self.eps_trunc.is_finite()) {
            return error::config(format!(
                "eps_trunc must be positive, got {}",
                self.eps_trunc
            ));
        }
        if !(self.z_max > self.eps_trunc) {
            return error::config(format!(
                "z_max ({}) must exceed eps_trunc ({})",
                self.z_max, self.eps_trunc
            ));
        }
        Ok(())
    }

    /// `int_a^b r^{-1-alpha} dr` for `0 < a <= b` (b may be infinite).
    pub fn radial_mass(&self, a: f64, b: f64) -> f64 {
        (a.powf(-self.alpha) - b.powf(-self.alpha)) / self.alpha
    }

    /// Intensity of jumps with `|z| > r`, i.e. the kernel mass of `r < |z| <= z_max`.
    ///
    /// `r` is clamped to `[eps_trunc, z_max]`. Zero when the channel is off.
    pub fn tail_rate(&self, dim: usize, r: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let r = r.clamp(self.eps_trunc, self.z_max);
        sphere_area(dim) * self.radial_mass(r, self.z_max)
    }

    /// Total jump intensity `lambda(eps_trunc)`.
    pub fn total_rate(&self, dim: usize) -> f64 {
        self.tail_rate(dim, self.eps_trunc)
    }

    /// Inverse CDF of the jump radius, whose density is proportional to
    /// `r^{-1-alpha}` on `[eps_trunc, z_max]`.
    pub fn radius_quantile(&self, u: f64) -> f64 {
        let a = self.eps_trunc.powf(-self.alpha);
        let b = self.z_max.powf(-self.alpha);
        (a - u * (a - b)).powf(-1.0 / self.alpha)
    }
}

/// Surface measure of the unit sphere in `R^d` (counting measure of `{-1, 1}` for d = 1).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => unreachable!("dimension validated to 1 or 2"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyConfig {
    pub dim: usize,
    pub kernel: JumpKernel,
    pub t_grid: Vec<f64>,
}

impl LevyConfig {
    pub fn new(dim: usize, kernel: JumpKernel, t_grid: Vec<f64>) -> Result<Self> {
        let c = Self {
            dim,
            kernel,
            t_grid,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return error::config(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        self.kernel.validate()?;
        validate_time_grid(&self.t_grid)
    }

    pub fn horizon(&self) -> f64 {
        *self.t_grid.last().expect("validated non-empty")
    }
}

/// Uniform grid `0, T/n, ..., T`.
pub fn uniform_time_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    if n_steps == 0 {
        return vec![0.0];
    }
    (0..=n_steps)
        .map(|i| horizon * i as f64 / n_steps as f64)
        .collect()
}

pub(crate) fn validate_time_grid(t: &[f64]) -> Result<()> {
    match t.first() {
        None => return error::config("time grid is empty"),
        Some(&t0) if t0 != 0.0 => {
            return error::config(format!("time grid must start at 0, starts at {t0}"))
        }
        _ => {}
    }
    for (i, w) in t.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return error::config(format!(
                "time grid interval {i} is nonpositive: [{}, {}]",
                w[0], w[1]
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub z: Vec<f64>,
}

/// One trajectory of `X`, immutable after sampling.
#[derive(Debug, Clone)]
pub struct LevyPath {
    config: Arc<LevyConfig>,
    x0: Vec<f64>,
    brownian_increments: Vec<f64>,
    jumps: Vec<Jump>,
    seed: u64,
    // W at the grid times, row-major (time, dim).
    w_cum: Vec<f64>,
    // Prefix sums of jump vectors; row j holds the sum of the first j jumps.
    jump_cum: Vec<f64>,
}

impl LevyPath {
    pub fn config(&self) -> &Arc<LevyConfig> {
        &self.config
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Gaussian increments of `W`, one row of length `dim` per interval.
    pub fn brownian_increments(&self) -> &[f64] {
        &self.brownian_increments
    }

    /// `W` at grid index `k`.
    pub fn brownian_at(&self, k: usize) -> &[f64] {
        let d = self.config.dim;
        &self.w_cum[k * d..(k + 1) * d]
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.config.horizon();
        if !(0.0..=horizon).contains(&t) {
            return range(format!("time {t} outside [0, {horizon}]"));
        }
        Ok(())
    }

    // W is linearly interpolated between grid times.
    fn fill_position(&self, t: f64, strict_before: bool, out: &mut [f64]) {
        let d = self.config.dim;
        let grid = &self.config.t_grid;
        let k = grid.partition_point(|&s| s <= t).saturating_sub(1);
        let (wk, wk1) = if k + 1 < grid.len() {
            let theta = (t - grid[k]) / (grid[k + 1] - grid[k]);
            (1.0 - theta, theta)
        } else {
            (1.0, 0.0)
        };
        let n_jumps = if strict_before {
            self.jumps.partition_point(|j| j.time < t)
        } else {
            self.jumps.partition_point(|j| j.time <= t)
        };
        for c in 0..d {
            let w_lo = self.w_cum[k * d + c];
            let w = if wk1 > 0.0 {
                wk * w_lo + wk1 * self.w_cum[(k + 1) * d + c]
            } else {
                w_lo
            };
            out[c] = self.x0[c] + w + self.jump_cum[n_jumps * d + c];
        }
    }

    /// `X_t = x0 + W_t + sum_{s <= t} z_s`.
    pub fn position(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.config.dim];
        self.fill_position(t, false, &mut out);
        Ok(out)
    }

    /// `X_{t-}`; differs from [`position`](Self::position) only at jump times.
    pub fn left_limit(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.config.dim];
        self.fill_position(t, true, &mut out);
        Ok(out)
    }

    /// First coordinate of `X_t`, unchecked. Intended for one-dimensional hot loops.
    pub fn position_1d(&self, t: f64) -> f64 {
        let mut out = [0.0; 2];
        self.fill_position(t, false, &mut out[..self.config.dim]);
        out[0]
    }

    pub fn left_limit_1d(&self, t: f64) -> f64 {
        let mut out = [0.0; 2];
        self.fill_position(t, true, &mut out[..self.config.dim]);
        out[0]
    }

    /// First coordinate of `X` at grid index `k` (jumps at exactly `t_k` included).
    pub fn position_at_index_1d(&self, k: usize) -> f64 {
        let d = self.config.dim;
        let t = self.config.t_grid[k];
        let n_jumps = self.jumps.partition_point(|j| j.time <= t);
        self.x0[0] + self.w_cum[k * d] + self.jump_cum[n_jumps * d]
    }
}

/// Draws one path. Brownian increments and jump events come from independent streams of `seed`.
pub fn sample_path(config: &Arc<LevyConfig>, x0: &[f64], seed: u64) -> Result<LevyPath> {
    config.validate()?;
    let d = config.dim;
    if x0.len() != d {
        return error::config(format!(
            "starting point has dimension {}, expected {d}",
            x0.len()
        ));
    }
    let grid = &config.t_grid;

    let mut rng = stream_rng(seed, Stream::Brownian);
    let mut brownian_increments = Vec::with_capacity((grid.len() - 1) * d);
    let mut w_cum = vec![0.0; grid.len() * d];
    for (k, w) in grid.windows(2).enumerate() {
        let sd = (w[1] - w[0]).sqrt();
        for c in 0..d {
            let dw = sd * rng.sample::<f64, _>(StandardNormal);
            brownian_increments.push(dw);
            w_cum[(k + 1) * d + c] = w_cum[k * d + c] + dw;
        }
    }

    let horizon = config.horizon();
    let kernel = &config.kernel;
    let mean_count = kernel.total_rate(d) * horizon;
    let mut jumps = Vec::new();
    if mean_count > 0.0 {
        let mut rng = stream_rng(seed, Stream::Jumps);
        let poisson = Poisson::new(mean_count)
            .map_err(|e| Error::Numerical(format!("poisson intensity {mean_count}: {e}")))?;
        let count = poisson.sample(&mut rng) as usize;
        jumps.reserve(count);
        for _ in 0..count {
            let time = horizon * (1.0 - rng.random::<f64>());
            let r = kernel.radius_quantile(rng.random::<f64>());
            let z = if d == 1 {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                vec![sign * r]
            } else {
                let theta = 2.0 * PI * rng.random::<f64>();
                vec![r * theta.cos(), r * theta.sin()]
            };
            jumps.push(Jump { time, z });
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    let mut jump_cum = vec![0.0; (jumps.len() + 1) * d];
    for (j, jump) in jumps.iter().enumerate() {
        for c in 0..d {
            jump_cum[(j + 1) * d + c] = jump_cum[j * d + c] + jump.z[c];
        }
    }

    Ok(LevyPath {
        config: Arc::clone(config),
        x0: x0.to_vec(),
        brownian_increments,
        jumps,
        seed,
        w_cum,
        jump_cum,
    })
}

/// Samples `n` one-dimensional paths whose starting points are uniform on `start_box`.
///
/// Path `i` uses the seed `derive_seed(root_seed, i)`; the output order is the index order.
pub fn sample_uniform_start_paths(
    config: &Arc<LevyConfig>,
    n: usize,
    start_box: Interval,
    root_seed: u64,
) -> Result<Vec<LevyPath>> {
    if config.dim != 1 {
        return error::config("uniform-start sampling is one-dimensional");
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(root_seed, i as u64);
            let u: f64 = stream_rng(seed, Stream::Uniform).random();
            sample_path(config, &[start_box.lo + u * start_box.width()], seed)
        })
        .collect()
}

/// Samples `n` paths started at the origin.
pub fn sample_origin_paths(
    config: &Arc<LevyConfig>,
    n: usize,
    root_seed: u64,
) -> Result<Vec<LevyPath>> {
    let origin = vec![0.0; config.dim];
    (0..n)
        .into_par_iter()
        .map(|i| sample_path(config, &origin, derive_seed(root_seed, i as u64)))
        .collect()
}

/// Writes paths as `path_id,kind,t,value...`: one `bm` row per grid time with `W_t`,
/// one `jump` row per jump with its vector `z`.
pub fn write_paths_csv<W: Write>(out: W, paths: &[LevyPath]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let d = paths.first().map_or(1, |p| p.config.dim);
    let mut header = vec!["path_id".to_string(), "kind".into(), "t".into()];
    header.extend((1..=d).map(|c| format!("value{c}")));
    wtr.write_record(&header)?;
    for (id, path) in paths.iter().enumerate() {
        for (k, t) in path.config.t_grid.iter().enumerate() {
            let mut rec = vec![id.to_string(), "bm".into(), t.to_string()];
            rec.extend(path.brownian_at(k).iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        for jump in &path.jumps {
            let mut rec = vec![id.to_string(), "jump".into(), jump.time.to_string()];
            rec.extend(jump.z.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Kolmogorov–Smirnov uniformity statistic of the evolved points and its Monte Carlo p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n_interior: usize,
    pub n_paths: usize,
}

/// Number of reference samples behind the Monte Carlo p-value.
pub const KS_REPLICATES: usize = 399;

/// Starts `n_paths` points uniformly on `start_box`, evolves them to the horizon and tests
/// whether the points landing in `interior` are uniform there.
///
/// Under invariance of Lebesgue measure the law restricted to an interior window, far enough
/// from the box edges that no mass is exchanged with the outside, stays uniform.
pub fn invariance_diagnostic(
    config: &Arc<LevyConfig>,
    n_paths: usize,
    start_box: Interval,
    interior: Interval,
    seed: u64,
) -> Result<InvarianceReport> {
    if n_paths < 100 {
        return Err(Error::Refused(format!(
            "invariance diagnostic needs at least 100 paths, got {n_paths}"
        )));
    }
    if config.dim != 1 {
        return error::config("invariance diagnostic is one-dimensional");
    }
    if interior.lo < start_box.lo || interior.hi > start_box.hi {
        return error::config("interior window must lie inside the start box");
    }
    let horizon = config.horizon();
    let paths = sample_uniform_start_paths(config, n_paths, start_box, seed)?;
    let sample: Vec<f64> = paths
        .iter()
        .map(|p| p.position_1d(horizon))
        .filter(|x| interior.contains(*x))
        .map(|x| (x - interior.lo) / interior.width())
        .collect();
    let n = sample.len();
    if n < 2 {
        return Err(Error::Refused(
            "fewer than two points ended in the interior window".into(),
        ));
    }
    let statistic = ks_uniform(&sample);

    let exceed = (0..KS_REPLICATES)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(derive_seed(seed ^ 0x5EED_F00D, r as u64), Stream::Reference);
            let reference: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            ks_uniform(&reference) >= statistic
        })
        .filter(|&b| b)
        .count();
    let p_value = (1 + exceed) as f64 / (1 + KS_REPLICATES) as f64;
    Ok(InvarianceReport {
        statistic,
        p_value,
        n_interior: n,
        n_paths,
    })
}

/// Chi-square test that the number of jumps with `|z| > r` over `[0, T]` is Poisson with
/// mean `T * tail_rate(r)`.
pub fn jump_count_gof(
    config: &Arc<LevyConfig>,
    r: f64,
    n_paths: usize,
    seed: u64,
) -> Result<GofReport> {
    let k = &config.kernel;
    if !(r >= k.eps_trunc && r < k.z_max) {
        return range(format!("threshold {r} outside [eps_trunc, z_max)"));
    }
    let paths = sample_origin_paths(config, n_paths, seed)?;
    let counts: Vec<usize> = paths
        .iter()
        .map(|p| p.jumps.iter().filter(|j| norm(&j.z) > r).count())
        .collect();
    let lambda = k.tail_rate(config.dim, r) * config.horizon();
    let max_obs = counts.iter().copied().max().unwrap_or(0);
    let n_bins = max_obs.max((lambda + 10.0 * lambda.sqrt()).ceil() as usize) + 1;
    let mut observed = vec![0u64; n_bins];
    for c in counts {
        observed[c] += 1;
    }
    let mut expected = Vec::with_capacity(n_bins);
    let mut p = (-lambda).exp();
    let mut cum = 0.0;
    for j in 0..n_bins {
        if j > 0 {
            p *= lambda / j as f64;
        }
        if j + 1 == n_bins {
            expected.push(n_paths as f64 * (1.0f64 - cum).max(0.0));
        } else {
            expected.push(n_paths as f64 * p);
            cum += p;
        }
    }
    Ok(chi_square_gof(&observed, &expected))
}

/// Two-sided sign test of `X_T - x0` (first coordinate) about zero.
pub fn symmetry_test(config: &Arc<LevyConfig>, n_paths: usize, seed: u64) -> Result<f64> {
    let horizon = config.horizon();
    let paths = sample_origin_paths(config, n_paths, seed)?;
    let (mut pos, mut nonzero) = (0u64, 0u64);
    for p in &paths {
        let x = p.position_1d(horizon);
        if x != 0.0 {
            nonzero += 1;
            if x > 0.0 {
                pos += 1;
            }
        }
    }
    Ok(sign_test(pos, nonzero))
}

/// Correlation between `W_T` (first coordinate) and the jump count, with its standard error.
pub fn brownian_jump_correlation(
    config: &Arc<LevyConfig>,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let paths = sample_origin_paths(config, n_paths, seed)?;
    let last = config.t_grid.len() - 1;
    let w: Vec<f64> = paths.iter().map(|p| p.brownian_at(last)[0]).collect();
    let n: Vec<f64> = paths.iter().map(|p| p.jumps.len() as f64).collect();
    Ok(correlation(&w, &n))
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}
