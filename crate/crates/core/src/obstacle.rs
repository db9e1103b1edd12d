//! Penalization limit for the obstacle problem: the limit field, the reflecting measure `nu`
//! and the checks of the weak-solution conditions.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bdsde::{SampleSet, MIN_SAMPLES};
use crate::error::{config, Error, Result};
use crate::ipde::{
    solve_penalized, time_distance, trapezoid, DiscreteGenerator, NoisePath, PenalizedSolution,
    ProblemSpec, SpaceTimeField,
};
use crate::levy::{Interval, LevyPath};
use crate::stats::MeanEstimate;

/// Diagnostics of one penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    pub level: u64,
    /// `max (v - u^n)^+` over all space-time nodes.
    pub sup_negative_part: f64,
    /// `||u^n - u^{previous level}||_T`; `None` on the first level.
    pub distance_to_previous: Option<f64>,
    /// `sum (u^n - v) nu^n` over all cells.
    pub skorokhod_pairing: f64,
    pub nu_mass: f64,
}

#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub u: SpaceTimeField,
    /// Cell masses of the reflecting measure at the last level run.
    pub nu: SpaceTimeField,
    pub level: u64,
    pub trace: Vec<LevelDiagnostics>,
    pub converged: bool,
    /// `max (v - u)^+` of the returned field.
    pub tol_final: f64,
}

fn diagnostics(
    sol: &PenalizedSolution,
    spec: &ProblemSpec,
    previous: Option<f64>,
) -> Result<LevelDiagnostics> {
    let gap = sol.field.zip_with(&spec.obstacle, |u, v| u - v)?;
    let sup_negative_part = gap.data().iter().fold(0.0, |m: f64, g| m.max(-g));
    let skorokhod_pairing = gap
        .data()
        .iter()
        .zip(sol.penalty_mass.data())
        .map(|(g, m)| g * m)
        .sum();
    Ok(LevelDiagnostics {
        level: sol.level,
        sup_negative_part,
        distance_to_previous: previous,
        skorokhod_pairing,
        nu_mass: sol.penalty_mass.total(),
    })
}

fn validate_schedule(schedule: &[u64], times: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return config("penalty schedule is empty");
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return config(format!(
            "penalty schedule must be strictly increasing: {schedule:?}"
        ));
    }
    let dt_max = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let n_max = *schedule.last().expect("nonempty");
    if n_max as f64 * dt_max > 1.0 + 1e-12 {
        return config(format!(
            "penalty level {n_max} with step {dt_max} violates n * dt <= 1"
        ));
    }
    Ok(())
}

/// Runs the penalized solver along `schedule` until two consecutive levels are within `tol`
/// in the `||.||_T` norm. An exhausted schedule is reported through `converged = false`.
pub fn solve_obstacle(
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    noise: &NoisePath,
    schedule: &[u64],
    tol: f64,
) -> Result<ObstacleSolution> {
    validate_schedule(schedule, spec.times())?;
    if !(tol > 0.0) {
        return config(format!("tolerance must be positive, got {tol}"));
    }
    let mut trace = Vec::with_capacity(schedule.len());
    let mut previous: Option<PenalizedSolution> = None;
    let mut converged = false;
    for &n in schedule {
        let sol = solve_penalized(spec, gen, n, noise)?;
        let dist = match &previous {
            Some(p) => Some(time_distance(&sol.field, &p.field, gen)?),
            None => None,
        };
        trace.push(diagnostics(&sol, spec, dist)?);
        previous = Some(sol);
        if dist.is_some_and(|d| d < tol) {
            converged = true;
            break;
        }
    }
    let last = previous.expect("schedule nonempty");
    let tol_final = trace.last().expect("one level run").sup_negative_part;
    Ok(ObstacleSolution {
        u: last.field,
        nu: last.penalty_mass,
        level: last.level,
        trace,
        converged,
        tol_final,
    })
}

/// Writes `n,sup_neg_part,h1_dist,skorokhod_pairing,nu_mass`.
pub fn write_trace_csv<W: Write>(out: W, trace: &[LevelDiagnostics]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "n",
        "sup_neg_part",
        "h1_dist",
        "skorokhod_pairing",
        "nu_mass",
    ])?;
    for d in trace {
        wtr.write_record([
            d.level.to_string(),
            d.sup_negative_part.to_string(),
            d.distance_to_previous
                .map_or(String::new(), |x| x.to_string()),
            d.skorokhod_pairing.to_string(),
            d.nu_mass.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Grid form of the minimality condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SkorokhodReport {
    /// `sum (u - v) nu` over all cells.
    pub pairing: f64,
    pub nu_mass: f64,
    /// `sup |u - v|` over all space-time nodes.
    pub sup_gap: f64,
}

impl SkorokhodReport {
    /// `|pairing| <= factor * nu_mass * sup_gap`.
    pub fn within(&self, factor: f64) -> bool {
        self.pairing.abs() <= factor * self.nu_mass * self.sup_gap
    }
}

pub fn skorokhod_check(sol: &ObstacleSolution, spec: &ProblemSpec) -> Result<SkorokhodReport> {
    let gap = sol.u.zip_with(&spec.obstacle, |u, v| u - v)?;
    let pairing = gap
        .data()
        .iter()
        .zip(sol.nu.data())
        .map(|(g, m)| g * m)
        .sum();
    let sup_gap = gap.data().iter().fold(0.0, |s: f64, g| s.max(g.abs()));
    Ok(SkorokhodReport {
        pairing,
        nu_mass: sol.nu.total(),
        sup_gap,
    })
}

/// `nu`-mass carried by cells where `u - v > contact_tol`.
pub fn mass_off_contact(
    sol: &ObstacleSolution,
    spec: &ProblemSpec,
    contact_tol: f64,
) -> Result<f64> {
    let gap = sol.u.zip_with(&spec.obstacle, |u, v| u - v)?;
    Ok(gap
        .data()
        .iter()
        .zip(sol.nu.data())
        .filter(|(g, _)| **g > contact_tol)
        .map(|(_, m)| m)
        .sum())
}

/// Largest `u^{n_k} - u^{n_{k+1}}` over consecutive schedule levels and all nodes.
pub fn monotonicity_violation(
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    noise: &NoisePath,
    schedule: &[u64],
) -> Result<f64> {
    validate_schedule(schedule, spec.times())?;
    let fields: Vec<SpaceTimeField> = schedule
        .par_iter()
        .map(|&n| solve_penalized(spec, gen, n, noise).map(|s| s.field))
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    for w in fields.windows(2) {
        let d = w[0].zip_with(&w[1], |a, b| a - b)?;
        worst = worst.max(d.data().iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// `u_A <= u_B + 1e-8` at every level and node.
    pub holds: bool,
    /// `max (u_A - u_B)` over levels and nodes.
    pub max_violation: f64,
    /// Fields at the last schedule level.
    pub u_a: SpaceTimeField,
    pub u_b: SpaceTimeField,
}

/// Solves both problems at every schedule level after checking that the data are ordered:
/// `Phi_A <= Phi_B`, `v_A <= v_B`, `f_A <= f_B` and `h_A = h_B` along the solutions of `A`.
pub fn comparison_test(
    spec_a: &ProblemSpec,
    spec_b: &ProblemSpec,
    gen: &DiscreteGenerator,
    noise: &NoisePath,
    schedule: &[u64],
) -> Result<ComparisonReport> {
    validate_schedule(schedule, spec_a.times())?;
    spec_a.obstacle.check_same_layout(&spec_b.obstacle)?;
    if spec_a.h.len() != spec_b.h.len() {
        return config("noise coefficients differ in dimension");
    }
    if let Some(j) = (0..spec_a.terminal.values.len())
        .find(|&j| spec_a.terminal.values[j] > spec_b.terminal.values[j])
    {
        return config(format!("terminal values not ordered at node {j}"));
    }
    if spec_a
        .obstacle
        .data()
        .iter()
        .zip(spec_b.obstacle.data())
        .any(|(a, b)| a > b)
    {
        return config("obstacles not ordered");
    }
    let grid = gen.grid();
    let times = spec_a.times();
    let mut max_violation = f64::NEG_INFINITY;
    let mut last = None;
    for &n in schedule {
        let a = solve_penalized(spec_a, gen, n, noise)?;
        for k in 0..times.len() {
            let u = a.field.slice(k);
            let g = grid.gradient(u);
            for j in 0..grid.len() {
                let (t, x) = (times[k], grid.node(j));
                let (fa, fb) = ((spec_a.f)(t, x, u[j], g[j]), (spec_b.f)(t, x, u[j], g[j]));
                if fa > fb + 1e-12 {
                    return config(format!(
                        "drifts not ordered at t = {t}, x = {x}: {fa} > {fb}"
                    ));
                }
                for (ha, hb) in spec_a.h.iter().zip(&spec_b.h) {
                    if ha(t, x, u[j], g[j]) != hb(t, x, u[j], g[j]) {
                        return config(format!("noise coefficients differ at t = {t}, x = {x}"));
                    }
                }
            }
        }
        let b = solve_penalized(spec_b, gen, n, noise)?;
        let d = a.field.zip_with(&b.field, |x, y| x - y)?;
        max_violation =
            max_violation.max(d.data().iter().copied().fold(f64::NEG_INFINITY, f64::max));
        last = Some((a.field, b.field));
    }
    let (u_a, u_b) = last.expect("schedule nonempty");
    Ok(ComparisonReport {
        holds: max_violation <= 1e-8,
        max_violation,
        u_a,
        u_b,
    })
}

/// `E E^m [sup_t ((Y^n_t - S_t)^-)^2]` at one penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayLevel {
    pub level: u64,
    pub estimate: MeanEstimate,
    pub n_escaped: usize,
}

/// Monte Carlo sweep of the squared negative part along paths. Path `k` is paired with
/// noise path `k mod noises.len()`; the supremum runs over grid times and jump left limits.
pub fn negative_part_decay(
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    noises: &[NoisePath],
    schedule: &[u64],
    paths: &[Arc<LevyPath>],
    start_box: Interval,
) -> Result<Vec<DecayLevel>> {
    if paths.len() < MIN_SAMPLES {
        return Err(Error::Refused(format!(
            "{} paths, at least {MIN_SAMPLES} required",
            paths.len()
        )));
    }
    if noises.is_empty() {
        return config("at least one noise path is required");
    }
    validate_schedule(schedule, spec.times())?;
    let m = noises.len();
    schedule
        .iter()
        .map(|&n| {
            let mut values = vec![None; paths.len()];
            let mut n_escaped = 0;
            for (r, noise) in noises.iter().enumerate() {
                let field = solve_penalized(spec, gen, n, noise)?.field;
                let idx: Vec<usize> = (r..paths.len()).step_by(m).collect();
                let subset: Vec<Arc<LevyPath>> =
                    idx.iter().map(|&i| Arc::clone(&paths[i])).collect();
                let set = SampleSet::evaluate(&field, &subset, spec, n, start_box)?;
                n_escaped += set.n_escaped;
                for (&i, s) in idx.iter().zip(&set.samples) {
                    values[i] = (!s.escaped).then_some(s.sup_negative_part_sq);
                }
            }
            let xs: Vec<f64> = values.into_iter().flatten().collect();
            let estimate = MeanEstimate::from_slice(&xs).scaled(start_box.width());
            Ok(DecayLevel {
                level: n,
                estimate,
                n_escaped,
            })
        })
        .collect()
}

/// `phi(t, x) = p(t) psi((x - center) / radius)` with a polynomial `p` and the smooth bump
/// `psi(r) = exp(-1 / (1 - r^2))` on `|r| < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    /// Coefficients of `p`, constant term first.
    pub time_coeffs: Vec<f64>,
    pub center: f64,
    pub radius: f64,
}

impl TestFunction {
    pub fn new(time_coeffs: Vec<f64>, center: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center.is_finite()) {
            return config(format!(
                "invalid test function support: center {center}, radius {radius}"
            ));
        }
        Ok(Self {
            time_coeffs,
            center,
            radius,
        })
    }

    fn bump(&self, x: f64) -> f64 {
        let r = (x - self.center) / self.radius;
        if r.abs() < 1.0 {
            (-1.0 / (1.0 - r * r)).exp()
        } else {
            0.0
        }
    }

    fn poly(&self, t: f64) -> f64 {
        self.time_coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * t + c)
    }

    fn poly_derivative(&self, t: f64) -> f64 {
        self.time_coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.poly(t) * self.bump(x)
    }

    pub fn time_derivative(&self, t: f64, x: f64) -> f64 {
        self.poly_derivative(t) * self.bump(x)
    }
}

/// Terms of the weak formulation at `t = 0` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormResidual {
    pub residual: f64,
    /// `sup_t ||phi_t||_2`, the scale the residual is compared against.
    pub scale: f64,
}

/// Evaluates
/// `int [(u_s, d_s phi_s) + E(u_s, phi_s)] ds - (Phi, phi_T) + (u_0, phi_0) - int (f(u, Du), phi) ds
///  - int (h(u, Du), phi) dB - int int phi dnu`
/// with trapezoid time quadrature, the backward noise sum taken at the later level, and `nu`
/// paired with `phi` at the node carrying each cell mass.
pub fn weak_form_residual(
    u: &SpaceTimeField,
    nu: &SpaceTimeField,
    spec: &ProblemSpec,
    gen: &DiscreteGenerator,
    phi: &TestFunction,
    noise: &NoisePath,
) -> Result<WeakFormResidual> {
    u.check_same_layout(nu)?;
    u.check_same_layout(&spec.obstacle)?;
    let grid = gen.grid();
    let lo = phi.center - phi.radius;
    let hi = phi.center + phi.radius;
    if !(grid.contains(lo) && grid.contains(hi)) {
        return config(format!(
            "test function support [{lo}, {hi}] is not inside the grid"
        ));
    }
    let times = u.times();
    if !spec.h.is_empty() && noise.times() != times {
        return config("noise path and field use different time grids");
    }
    let phi_f = SpaceTimeField::from_fn(grid, Arc::clone(times), |t, x| phi.value(t, x));
    let dphi = SpaceTimeField::from_fn(grid, Arc::clone(times), |t, x| phi.time_derivative(t, x));
    let n_t = times.len();
    let last = n_t - 1;

    let mut transport = Vec::with_capacity(n_t);
    let mut energy = Vec::with_capacity(n_t);
    let mut drift = Vec::with_capacity(n_t);
    let mut noise_term = 0.0;
    for k in 0..n_t {
        let uk = u.slice(k);
        let g = grid.gradient(uk);
        transport.push(grid.inner(uk, dphi.slice(k)));
        energy.push(gen.dirichlet_energy(uk, phi_f.slice(k)));
        let f: Vec<f64> = (0..grid.len())
            .map(|j| (spec.f)(times[k], grid.node(j), uk[j], g[j]))
            .collect();
        drift.push(grid.inner(&f, phi_f.slice(k)));
        if k > 0 && !spec.h.is_empty() {
            for (l, hl) in spec.h.iter().enumerate() {
                let hv: Vec<f64> = (0..grid.len())
                    .map(|j| hl(times[k], grid.node(j), uk[j], g[j]))
                    .collect();
                noise_term += grid.inner(&hv, phi_f.slice(k)) * noise.increment(k - 1)[l];
            }
        }
    }
    let measure: f64 = phi_f.data().iter().zip(nu.data()).map(|(p, m)| p * m).sum();
    let residual = trapezoid(times, &transport) + trapezoid(times, &energy)
        - grid.inner(&spec.terminal.values, phi_f.slice(last))
        + grid.inner(u.slice(0), phi_f.slice(0))
        - trapezoid(times, &drift)
        - noise_term
        - measure;
    let scale = (0..n_t)
        .map(|k| grid.norm(phi_f.slice(k)))
        .fold(0.0, f64::max);
    Ok(WeakFormResidual {
        residual: residual.abs(),
        scale,
    })
}
