//! The subcommands. Each writes its artifacts into an output directory and returns the
//! checks it ran.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::config::RunConfig;
use super::plot::{Chart, Series};
use crate::bdsde::{energy_identity_check, pathwise_skorokhod, representation_residual, SampleSet};
use crate::error::{config, Result};
use crate::fixtures::{ordered_pair, shifted_pair, Fixture, Setup};
use crate::ipde::{
    solve_penalized, BoundaryRule, NoisePath, ProblemSpec, SpaceTimeField, INACTIVE_OBSTACLE,
};
use crate::levy::{
    brownian_jump_correlation, jump_count_gof, sample_origin_paths, sample_uniform_start_paths,
    symmetry_test, write_paths_csv, LevyPath,
};
use crate::obstacle::{
    comparison_test, monotonicity_violation, negative_part_decay, skorokhod_check, solve_obstacle,
    write_trace_csv,
};
use crate::rng::derive_seed;
use crate::semigroup::Semigroup;

pub const SIGNIFICANCE: f64 = 0.01;
pub const STD_ERRS: f64 = 3.0;
pub const LINEAR_TOL: f64 = 1e-3;
pub const NOISE_SYMMETRY_TOL: f64 = 1e-10;
pub const MONOTONE_TOL: f64 = 1e-8;
pub const SKOROKHOD_FACTOR: f64 = 0.05;
pub const NEG_PART_FINAL_RATIO: f64 = 0.10;
pub const ENERGY_GAP: f64 = 0.10;
pub const COMPARISON_TOL: f64 = 1e-8;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRow {
    /// Passes when `value <= threshold`.
    pub fn at_most(check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(check: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            value,
            threshold,
            pass: value > threshold,
        }
    }
}

pub fn write_summary(path: &Path, rows: &[CheckRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["check", "value", "threshold", "pass"])?;
    for r in rows {
        wtr.write_record([
            r.check.clone(),
            r.value.to_string(),
            r.threshold.to_string(),
            r.pass.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_field(dir: &Path, name: &str, field: &SpaceTimeField) -> Result<()> {
    field.write_csv(create(dir, name)?)
}

fn write_plot(dir: &Path, name: &str, chart: &Chart) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(chart.to_svg().as_bytes())?;
    w.flush()?;
    Ok(())
}

fn paths(cfg: &RunConfig, setup: &Setup, task: u64) -> Result<Vec<Arc<LevyPath>>> {
    let paths = sample_uniform_start_paths(
        &setup.levy,
        cfg.monte_carlo.paths,
        cfg.start_box()?,
        cfg.path_seed(task),
    )?;
    Ok(paths.into_iter().map(Arc::new).collect())
}

fn first_noise(cfg: &RunConfig, setup: &Setup, spec: &ProblemSpec) -> Result<NoisePath> {
    if spec.noise_dim() == 0 {
        return Ok(NoisePath::zero(Arc::clone(&setup.times), 0));
    }
    Ok(cfg.noises(setup, spec.noise_dim())?.swap_remove(0))
}

fn has_active_obstacle(spec: &ProblemSpec) -> bool {
    spec.obstacle.data().iter().any(|&v| v > INACTIVE_OBSTACLE)
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Samples the jump-diffusion, exports a few paths and tests the jump law.
pub fn simulate_levy(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckRow>> {
    let levy = cfg.levy_config()?;
    let n = cfg.monte_carlo.paths;
    let export = sample_origin_paths(&levy, cfg.monte_carlo.export_paths, cfg.path_seed(0))?;
    write_paths_csv(create(out, "paths.csv")?, &export)?;

    let mut rows = Vec::new();
    if levy.kernel.enabled {
        let gof = jump_count_gof(&levy, levy.kernel.eps_trunc, n, cfg.path_seed(1))?;
        rows.push(CheckRow::above(
            "jump-count-chi2-p",
            gof.p_value,
            SIGNIFICANCE,
        ));
    }
    let p = symmetry_test(&levy, n, cfg.path_seed(2))?;
    rows.push(CheckRow::above("symmetry-sign-p", p, SIGNIFICANCE));
    let (r, se) = brownian_jump_correlation(&levy, n, cfg.path_seed(3))?;
    if se.is_finite() && r.is_finite() {
        rows.push(CheckRow::at_most(
            "brownian-jump-correlation-z",
            r.abs() / se,
            STD_ERRS,
        ));
    }

    if cfg.run.plots {
        let mut chart = Chart::new(
            "Sample paths from the origin",
            "t",
            "X_t (first coordinate)",
        );
        for (i, p) in export.iter().enumerate() {
            let pts = levy.t_grid.iter().map(|&t| (t, p.position_1d(t))).collect();
            chart = chart.with(Series::new(format!("path {i}"), pts));
        }
        write_plot(out, "paths.svg", &chart)?;
    }
    Ok(rows)
}

/// Solves a fixture without an active obstacle and compares with the semigroup solution.
pub fn solve_linear(cfg: &RunConfig, fixture: Fixture, out: &Path) -> Result<Vec<CheckRow>> {
    let setup = cfg.setup()?;
    let spec = cfg.problem_for(fixture, &setup)?;
    if has_active_obstacle(&spec) {
        return config(format!(
            "solve-linear needs a fixture without obstacle; '{}' has one",
            fixture.name()
        ));
    }
    let noise = first_noise(cfg, &setup, &spec)?;
    let sol = solve_penalized(&spec, &setup.gen, 0, &noise)?;
    write_field(out, "field.csv", &sol.field)?;

    let mut rows = Vec::new();
    if spec.h.is_empty() {
        let exact = semigroup_solution(&setup, &spec)?;
        let err = (0..sol.field.n_times())
            .map(|k| {
                let d: Vec<f64> = sol
                    .field
                    .slice(k)
                    .iter()
                    .zip(exact.slice(k))
                    .map(|(a, b)| a - b)
                    .collect();
                setup.grid.norm(&d) / setup.grid.norm(exact.slice(k)).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        rows.push(CheckRow::at_most(
            "semigroup-relative-error",
            err,
            LINEAR_TOL,
        ));
    } else {
        let minus = solve_penalized(&spec, &setup.gen, 0, &noise.negated())?.field;
        let zero = solve_penalized(
            &spec,
            &setup.gen,
            0,
            &NoisePath::zero(Arc::clone(&setup.times), spec.noise_dim()),
        )?
        .field;
        let gap = sol
            .field
            .zip_with(&minus, |a, b| a + b)?
            .zip_with(&zero, |s, z| s - 2.0 * z)?
            .sup_norm();
        rows.push(CheckRow::at_most(
            "noise-antisymmetry",
            gap,
            NOISE_SYMMETRY_TOL,
        ));
    }

    if cfg.run.plots {
        let nodes = setup.grid.nodes();
        let n_t = setup.times.len() - 1;
        let mut chart = Chart::new(
            format!("Solution of the '{}' fixture", fixture.name()),
            "x",
            "u(t, x)",
        );
        for k in [0, n_t / 2, n_t] {
            let pts = nodes
                .iter()
                .copied()
                .zip(sol.field.slice(k).iter().copied())
                .collect();
            chart = chart.with(Series::new(format!("t = {}", setup.times[k]), pts));
        }
        write_plot(out, "field.svg", &chart)?;
    }
    Ok(rows)
}

/// `u_t = P_{T-t} Phi + int_t^T P_{s-t} f_s ds` for a drift that depends on `(t, x)` only.
fn semigroup_solution(setup: &Setup, spec: &ProblemSpec) -> Result<SpaceTimeField> {
    let semigroup = Semigroup::new(&setup.gen);
    let source = setup.field(|t, x| (spec.f)(t, x, 0.0, 0.0));
    let integral = semigroup.resolvent_field(&source, 0.0)?;
    let horizon = setup.horizon();
    let mut out = integral;
    for (k, &t) in setup.times.iter().enumerate() {
        let free = semigroup.apply(&spec.terminal, horizon - t)?;
        for (o, f) in out.slice_mut(k).iter_mut().zip(&free.values) {
            *o += f;
        }
    }
    Ok(out)
}

/// Runs the penalization schedule, exports the limit field, the measure and the trace, and
/// checks monotonicity, the minimality condition and the decay of the negative part.
pub fn solve_obstacle_cmd(cfg: &RunConfig, fixture: Fixture, out: &Path) -> Result<Vec<CheckRow>> {
    let setup = cfg.setup()?;
    let spec = cfg.problem_for(fixture, &setup)?;
    let schedule = &cfg.solver.schedule;
    let noise = first_noise(cfg, &setup, &spec)?;
    let sol = solve_obstacle(&spec, &setup.gen, &noise, schedule, cfg.solver.tol)?;
    write_field(out, "field.csv", &sol.u)?;
    write_field(out, "nu.csv", &sol.nu)?;
    write_trace_csv(create(out, "trace.csv")?, &sol.trace)?;

    let mut rows = Vec::new();
    let last_distance = sol
        .trace
        .last()
        .and_then(|d| d.distance_to_previous)
        .unwrap_or(f64::INFINITY);
    rows.push(CheckRow::at_most(
        "penalty-convergence",
        last_distance,
        cfg.solver.tol,
    ));
    let violation = monotonicity_violation(&spec, &setup.gen, &noise, schedule)?;
    rows.push(CheckRow::at_most(
        "penalty-monotonicity",
        violation.max(0.0),
        MONOTONE_TOL,
    ));
    let report = skorokhod_check(&sol, &spec)?;
    let scale = report.nu_mass * report.sup_gap;
    let ratio = if scale > 0.0 {
        report.pairing.abs() / scale
    } else {
        report.pairing.abs()
    };
    rows.push(CheckRow::at_most(
        "skorokhod-grid-ratio",
        ratio,
        SKOROKHOD_FACTOR,
    ));

    let noises = if spec.noise_dim() == 0 {
        vec![noise]
    } else {
        cfg.noises(&setup, spec.noise_dim())?
    };
    let decay = negative_part_decay(
        &spec,
        &setup.gen,
        &noises,
        schedule,
        &paths(cfg, &setup, 4)?,
        cfg.start_box()?,
    )?;
    let mut wtr = csv::Writer::from_writer(create(out, "decay.csv")?);
    wtr.write_record(["n", "mean", "std_err", "n_escaped"])?;
    for d in &decay {
        wtr.write_record([
            d.level.to_string(),
            d.estimate.mean.to_string(),
            d.estimate.std_err.to_string(),
            d.n_escaped.to_string(),
        ])?;
    }
    wtr.flush()?;
    let means: Vec<f64> = decay.iter().map(|d| d.estimate.mean).collect();
    if means[0] > 0.0 {
        let ratio = means.last().expect("nonempty") / means[0];
        let mut row = CheckRow::at_most("negative-part-decay-ratio", ratio, NEG_PART_FINAL_RATIO);
        row.pass &= decreasing(&means);
        rows.push(row);
    } else {
        rows.push(CheckRow::at_most(
            "negative-part-max",
            means.iter().copied().fold(0.0, f64::max),
            0.0,
        ));
    }

    if cfg.run.plots {
        let trace = |f: fn(&crate::obstacle::LevelDiagnostics) -> Option<f64>| {
            sol.trace
                .iter()
                .filter_map(|d| f(d).map(|v| (d.level as f64, v)))
                .collect::<Vec<_>>()
        };
        let chart = Chart::new("Penalty trace", "n", "value")
            .log_log()
            .with(Series::new(
                "sup (v - u)^+",
                trace(|d| Some(d.sup_negative_part)),
            ))
            .with(Series::new(
                "||u^n - u^prev||_T",
                trace(|d| d.distance_to_previous),
            ))
            .with(Series::new(
                "|skorokhod pairing|",
                trace(|d| Some(d.skorokhod_pairing.abs())),
            ));
        write_plot(out, "trace.svg", &chart)?;
        let pts = decay
            .iter()
            .map(|d| (d.level as f64, d.estimate.mean))
            .collect();
        let chart = Chart::new("Negative part along paths", "n", "E E^m sup ((Y - S)^-)^2")
            .log_log()
            .with(Series::new("estimate", pts));
        write_plot(out, "decay.svg", &chart)?;
    }
    Ok(rows)
}

/// Evaluates the solution along paths and tests the representation formula and the pathwise
/// minimality condition.
pub fn check_representation(
    cfg: &RunConfig,
    fixture: Fixture,
    out: &Path,
) -> Result<Vec<CheckRow>> {
    let setup = cfg.setup()?;
    let spec = cfg.problem_for(fixture, &setup)?;
    let noise = first_noise(cfg, &setup, &spec)?;
    let n = if has_active_obstacle(&spec) {
        *cfg.solver.schedule.last().expect("validated")
    } else {
        0
    };
    let sol = solve_penalized(&spec, &setup.gen, n, &noise)?;
    let set = SampleSet::evaluate(
        &sol.field,
        &paths(cfg, &setup, 7)?,
        &spec,
        n,
        cfg.start_box()?,
    )?;

    let n_t = setup.times.len() - 1;
    let mut nodes: Vec<usize> = (0..=4).map(|q| q * n_t / 4).collect();
    nodes.dedup();
    let pairs: Vec<(usize, usize)> = nodes
        .iter()
        .flat_map(|&a| nodes.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
        .collect();
    let stats = representation_residual(&set, &sol.field, &spec, &setup.gen, &noise, n, &pairs)?;
    let mut wtr = csv::Writer::from_writer(create(out, "residuals.csv")?);
    wtr.write_record(["s", "t", "mean", "std_err", "count"])?;
    for s in &stats {
        wtr.write_record([
            s.s.to_string(),
            s.t.to_string(),
            s.estimate.mean.to_string(),
            s.estimate.std_err.to_string(),
            s.estimate.count.to_string(),
        ])?;
    }
    wtr.flush()?;
    let export = SampleSet {
        samples: set
            .samples
            .iter()
            .take(cfg.monte_carlo.export_paths)
            .cloned()
            .collect(),
        start_box: set.start_box,
        n_escaped: 0,
    };
    export.write_csv(create(out, "samples.csv")?)?;

    let z = stats
        .iter()
        .map(|s| s.estimate.mean.abs() / s.estimate.std_err)
        .fold(0.0, f64::max);
    let mut rows = vec![CheckRow::at_most("representation-residual-z", z, STD_ERRS)];
    if n > 0 {
        let pairing: f64 = sol
            .field
            .zip_with(&spec.obstacle, |u, v| u - v)?
            .data()
            .iter()
            .zip(sol.penalty_mass.data())
            .map(|(g, m)| g * m)
            .sum();
        let pathwise = pathwise_skorokhod(&set);
        let z = if pathwise.std_err > 0.0 {
            (pathwise.mean - pairing).abs() / pathwise.std_err
        } else {
            0.0
        };
        rows.push(CheckRow::at_most("skorokhod-pathwise-z", z, STD_ERRS));
    }
    Ok(rows)
}

/// Compares the energy of the potential of `int f(X_s) ds` with the second moment of the
/// additive functional, in the printed form and in the quadratic-variation form.
pub fn check_energy(cfg: &RunConfig, fixture: Fixture, out: &Path) -> Result<Vec<CheckRow>> {
    let setup = cfg.setup()?;
    let spec = cfg.problem_for(fixture, &setup)?;
    if has_active_obstacle(&spec)
        || !spec.h.is_empty()
        || spec.terminal.values.iter().any(|&v| v != 0.0)
    {
        return config(format!(
            "check-energy needs zero terminal value, no obstacle and no noise; fixture '{}' does not qualify",
            fixture.name()
        ));
    }
    let noise = NoisePath::zero(Arc::clone(&setup.times), 0);
    let sol = solve_penalized(&spec, &setup.gen, 0, &noise)?;
    let source = setup.field(|t, x| (spec.f)(t, x, 0.0, 0.0));
    let set = SampleSet::evaluate(
        &sol.field,
        &paths(cfg, &setup, 6)?,
        &spec,
        0,
        cfg.start_box()?,
    )?;
    write_field(out, "field.csv", &sol.field)?;

    let n_t = setup.times.len() - 1;
    let mut rows = Vec::new();
    let mut wtr = csv::Writer::from_writer(create(out, "energy.csv")?);
    wtr.write_record([
        "t",
        "norm_sq",
        "energy_integral",
        "lhs_as_printed",
        "lhs_quadratic_variation",
        "rhs",
        "rhs_std_err",
    ])?;
    for k in [0, n_t / 2] {
        let e = energy_identity_check(&set, &sol.field, &source, &setup.gen, k)?;
        wtr.write_record([
            e.t.to_string(),
            e.norm_sq.to_string(),
            e.energy_integral.to_string(),
            e.lhs_as_printed.to_string(),
            e.lhs_quadratic_variation.to_string(),
            e.rhs.mean.to_string(),
            e.rhs.std_err.to_string(),
        ])?;
        rows.push(CheckRow::at_most(
            format!("energy-gap-t{}", e.t),
            e.gap_as_printed(),
            ENERGY_GAP,
        ));
        rows.push(CheckRow::at_most(
            format!("energy-gap-2e-t{}", e.t),
            e.gap_quadratic_variation(),
            ENERGY_GAP,
        ));
    }
    wtr.flush()?;
    Ok(rows)
}

/// Ordered data give ordered solutions; under the periodic rule, shifting `Phi` by 1 shifts
/// the solution by 1.
pub fn check_comparison(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckRow>> {
    let setup = cfg.setup()?;
    let schedule = &cfg.solver.schedule;
    let (a, b) = ordered_pair(&setup)?;
    let report = comparison_test(
        &a,
        &b,
        &setup.gen,
        &NoisePath::zero(Arc::clone(&setup.times), 0),
        schedule,
    )?;
    write_field(out, "u_a.csv", &report.u_a)?;
    write_field(out, "u_b.csv", &report.u_b)?;
    let mut rows = vec![CheckRow::at_most(
        "comparison-max-violation",
        report.max_violation,
        COMPARISON_TOL,
    )];
    if setup.grid.boundary() == BoundaryRule::Periodic {
        let (a, b) = shifted_pair(&setup)?;
        let noise = NoisePath::sample(Arc::clone(&setup.times), 1, derive_seed(cfg.run.seed, 0))?;
        let mut err: f64 = 0.0;
        for &n in schedule {
            let ua = solve_penalized(&a, &setup.gen, n, &noise)?.field;
            let ub = solve_penalized(&b, &setup.gen, n, &noise)?.field;
            err = err.max(ub.zip_with(&ua, |x, y| (x - y - 1.0).abs())?.sup_norm());
        }
        rows.push(CheckRow::at_most("shift-max-error", err, COMPARISON_TOL));
    }
    Ok(rows)
}
