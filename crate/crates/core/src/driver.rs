//! Experiment drivers behind the command-line verbs. Each writes CSV
//! artifacts and a manifest into an output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::bmo::{self, BmoReport, CubeFamily};
use crate::config::{Config, Pair, Solver};
use crate::csvio;
use crate::error::{Error, Result};
use crate::eulerian::solve_fv_series;
use crate::fields::{validate_divergence_decomposition, validate_growth, Domain, Grid, GriddedDensity, SamplePlan};
use crate::fit;
use crate::flow::FlowOptions;
use crate::gronwall::{self, Certificate, CertifyOptions};
use crate::lagrangian::{pushforward_series, representation_series, InitialData};
use crate::scenarios::{inject_bump, Scenario};

const TIME_MATCH: f64 = 1e-9;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn manifest(dir: &Path, verb: &str, cfg: &Config, started: Instant, extra: &[(&str, String)]) -> Result<()> {
    let mut w = create(dir, "manifest.toml")?;
    writeln!(w, "# {verb}")?;
    writeln!(w, "# ctlab {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# wall time {:.3} s", started.elapsed().as_secs_f64())?;
    writeln!(w, "# workers {}", crate::par::current_workers())?;
    for (k, v) in extra {
        writeln!(w, "# {k} {v}")?;
    }
    write!(w, "{}", cfg.to_toml())?;
    w.flush()?;
    Ok(())
}

/// Aborts on a failed growth or divergence audit unless `force` is set.
pub fn check_hypotheses(s: &Scenario, grid: &Grid, force: bool) -> Result<()> {
    let plan = SamplePlan::uniform(*grid, 5);
    let growth = validate_growth(&s.b, &plan)?;
    let div = validate_divergence_decomposition(&s.b, &s.dec, &plan)?;
    if force {
        return Ok(());
    }
    if !growth.pass {
        return Err(Error::Config(format!(
            "growth bound fails by {:e} at t = {}, x = {:?}",
            growth.max_deficit, growth.worst_time, growth.worst_point
        )));
    }
    if !div.pass {
        return Err(Error::Config(format!(
            "divergence decomposition fails by {:e} at t = {}, x = {:?}",
            div.max_deficit, div.worst_time, div.worst_point
        )));
    }
    Ok(())
}

/// Solution at every grid time with the chosen solver.
pub fn solve_series(s: &Scenario, solver: Solver, grid: &Grid, flow_dt: f64, cfl: f64, per_axis: usize) -> Result<Vec<GriddedDensity>> {
    let u0: InitialData = s.u0.clone().into();
    let opts = FlowOptions::new(flow_dt, s.domain).allow_exit();
    let times = grid.times();
    match solver {
        Solver::Representation => representation_series(&u0, &s.b, &s.c, &times, grid, &opts),
        Solver::Fv => Ok(solve_fv_series(&u0, &s.b, &s.c, grid, cfl)?.0),
        Solver::Pushforward => {
            let all = pushforward_series(&u0, &s.b, &s.c, grid.domain().horizon(), grid, per_axis, &opts)?;
            times
                .iter()
                .map(|&t| {
                    all.iter()
                        .find(|(u, _)| (u.time() - t).abs() <= TIME_MATCH)
                        .map(|(u, _)| u.clone().with_time(t))
                        .ok_or_else(|| Error::Config(format!("flow_dt {flow_dt} does not divide the output step {}", grid.dt())))
                })
                .collect()
        }
    }
}

fn output_indices(cfg: &Config, grid: &Grid) -> Result<Vec<usize>> {
    let times = grid.times();
    if cfg.times.is_empty() {
        return Ok((0..times.len()).collect());
    }
    cfg.times
        .iter()
        .map(|&t| {
            times
                .iter()
                .position(|&s| (s - t).abs() <= TIME_MATCH)
                .ok_or_else(|| Error::Config(format!("output time {t} is not a multiple of dt = {}", grid.dt())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub t: f64,
    pub mass: f64,
    /// `L¹` and relative sup distance to the exact solution, if known.
    pub l1_error: Option<f64>,
    pub max_rel_error: Option<f64>,
}

/// Relative sup error `max |u − v| / max(|v|, floor)` with the floor at
/// `1e-300` so that exact zeros compare absolutely.
pub fn max_relative_error(u: &GriddedDensity, exact: &GriddedDensity) -> f64 {
    u.values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| if *b == 0.0 { a.abs() } else { (a - b).abs() / b.abs() })
        .fold(0.0, f64::max)
}

/// Single run: densities at the requested times plus a mass/error audit.
pub fn run(cfg: &Config, out: &Path, force: bool) -> Result<Vec<RunRow>> {
    let started = Instant::now();
    let s = cfg.scenario()?;
    let grid = s.grid(cfg.n, cfg.dt)?;
    check_hypotheses(&s, &grid, force)?;
    let series = solve_series(&s, cfg.solver, &grid, cfg.flow_dt, cfg.cfl, cfg.per_axis)?;
    let mut rows = Vec::new();
    for (k, idx) in output_indices(cfg, &grid)?.into_iter().enumerate() {
        let u = &series[idx];
        csvio::write_density(u, create(out, &format!("density_{k:04}.csv"))?)?;
        let exact = s.exact_density(&grid, u.time());
        rows.push(RunRow {
            t: u.time(),
            mass: u.mass(),
            l1_error: exact.as_ref().map(|e| u.l1_distance(e)).transpose()?,
            max_rel_error: exact.as_ref().map(|e| max_relative_error(u, e)),
        });
    }
    write_run_audit(&rows, create(out, "audit.csv")?)?;
    manifest(out, "run", cfg, started, &[])?;
    Ok(rows)
}

pub fn write_run_audit<W: Write>(rows: &[RunRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["t", "mass", "l1_error", "max_rel_error"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
    for r in rows {
        w.write_record([format!("{:?}", r.t), format!("{:?}", r.mass), opt(r.l1_error), opt(r.max_rel_error)])?;
    }
    w.flush()?;
    Ok(())
}

/// Block average of a fine density onto a coarser grid of the same box.
pub fn coarsen(fine: &GriddedDensity, coarse: &Grid) -> Result<GriddedDensity> {
    let fg = fine.grid();
    if fg.n() % coarse.n() != 0 || fg.domain().half_width() != coarse.domain().half_width() || fg.dim() != coarse.dim() {
        return Err(Error::InvalidArgument("grids are not nested".into()));
    }
    let ratio = fg.n() / coarse.n();
    let d = fg.dim();
    let scale = (ratio as f64).powi(d as i32);
    let values = crate::par::map(coarse.cells(), |i| {
        let base = coarse.multi_index(i);
        let mut acc = Vec::with_capacity(ratio.pow(d as u32));
        for j in 0..ratio.pow(d as u32) {
            let mut idx = [0usize; crate::fields::MAX_DIM];
            let mut rem = j;
            for k in (0..d).rev() {
                idx[k] = base[k] * ratio + rem % ratio;
                rem /= ratio;
            }
            acc.push(fine.values()[fg.flat_index(&idx[..d])]);
        }
        crate::par::sum(&acc) / scale
    });
    GriddedDensity::new(*coarse, fine.time(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// `(n, h, flow dt, L¹ error)` per level.
    pub levels: Vec<(usize, f64, f64, f64)>,
    pub order: f64,
}

/// Errors at the horizon under simultaneous refinement of `h` and the flow
/// step, against the exact solution or else the finest level.
pub fn convergence_table(cfg: &Config) -> Result<ConvergenceTable> {
    let s = cfg.scenario()?;
    let levels = &cfg.convergence.levels;
    let n0 = levels[0] as f64;
    let mut finals = Vec::new();
    for &n in levels {
        let grid = s.grid(n, cfg.dt)?;
        let flow_dt = cfg.flow_dt * n0 / n as f64;
        let series = solve_series(&s, cfg.solver, &grid, flow_dt, cfg.cfl, cfg.per_axis)?;
        finals.push((n, grid, flow_dt, series.into_iter().last().expect("non-empty")));
    }
    let mut rows = Vec::new();
    match &s.exact {
        Some(_) => {
            for (n, g, fdt, u) in &finals {
                let e = s.exact_density(g, u.time()).expect("exact solution present");
                rows.push((*n, g.h(), *fdt, u.l1_distance(&e)?));
            }
        }
        None => {
            let (_, _, _, finest) = finals.last().expect("at least two levels");
            for (n, g, fdt, u) in &finals[..finals.len() - 1] {
                rows.push((*n, g.h(), *fdt, u.l1_distance(&coarsen(finest, g)?)?));
            }
        }
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let order = if rows.len() >= 2 { fit::order(&hs, &errs)? } else { f64::NAN };
    Ok(ConvergenceTable { levels: rows, order })
}

pub fn convergence(cfg: &Config, out: &Path) -> Result<ConvergenceTable> {
    let started = Instant::now();
    let table = convergence_table(cfg)?;
    csvio::write_convergence(&table.levels, table.order, create(out, "convergence.csv")?)?;
    manifest(out, "convergence", cfg, started, &[("order", format!("{:?}", table.order))])?;
    Ok(table)
}

/// The field named in the `[bmo]` table, sampled at `t = 0`.
pub fn bmo_field(cfg: &Config) -> Result<GriddedDensity> {
    let s = cfg.scenario()?;
    let l = cfg.bmo.half_width.unwrap_or(s.domain.half_width());
    let grid = Grid::new(Domain::new(s.dim(), l, s.domain.horizon())?, cfg.bmo.n, s.domain.horizon())?;
    let field = match cfg.bmo.field.as_str() {
        "d2" => s.dec.d2.clone(),
        "d1" => s.dec.d1.clone(),
        "div" => s.b.resolved_for(&grid).divergence_field(),
        src => crate::expr::Expr::parse(src, s.dim())?.into_field(),
    };
    Ok(field.abs().sample(&grid, 0.0))
}

pub fn bmo_report(cfg: &Config) -> Result<BmoReport> {
    let f = bmo_field(cfg)?;
    let family = CubeFamily::new(f.grid(), cfg.bmo.depth, true)?;
    bmo::analyze(&f, &family)
}

pub fn bmo_analyze(cfg: &Config, out: &Path) -> Result<BmoReport> {
    let started = Instant::now();
    let report = bmo_report(cfg)?;
    csvio::write_bmo_cubes(&report, create(out, "bmo_cubes.csv")?)?;
    let tail: Vec<(f64, f64)> = report.jn.samples.iter().map(|s| (s.0, s.1)).collect();
    csvio::write_scan(["r", "tail"], &tail, create(out, "bmo_tail.csv")?)?;
    csvio::write_scan(["lambda", "deficit"], &report.decay.samples, create(out, "bmo_deficit.csv")?)?;
    manifest(out, "bmo-analyze", cfg, started, &[])?;
    Ok(report)
}

/// `max_t ‖u₁(t) − u₂(t)‖₂`.
pub fn l2_gap(u1: &[GriddedDensity], u2: &[GriddedDensity]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (a, b) in u1.iter().zip(u2) {
        let d = a.difference(b)?;
        let sq: Vec<f64> = d.values().iter().map(|v| v * v).collect();
        worst = worst.max((d.grid().cell_volume() * crate::par::sum(&sq)).sqrt());
    }
    Ok(worst)
}

/// Representation and finite-volume series on one grid.
pub fn solver_pair(s: &Scenario, cfg: &Config, n: usize) -> Result<(Grid, Vec<GriddedDensity>, Vec<GriddedDensity>)> {
    let grid = s.grid(n, cfg.dt)?;
    let rep = solve_series(s, Solver::Representation, &grid, cfg.flow_dt, cfg.cfl, cfg.per_axis)?;
    let fv = solve_series(s, Solver::Fv, &grid, cfg.flow_dt, cfg.cfl, cfg.per_axis)?;
    Ok((grid, rep, fv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFit {
    /// `(n, h, L² gap)` per level.
    pub levels: Vec<(usize, f64, f64)>,
    /// Fitted gap at the finest level.
    pub noise: f64,
}

/// Runs the certificate pipeline of the `[certify]` table.
pub fn certificate(cfg: &Config, force: bool) -> Result<(Certificate, NoiseFit)> {
    let s = cfg.scenario()?;
    let c = &cfg.certify;
    let mut fit_rows = Vec::new();
    let mut finest = None;
    for &n in &c.levels {
        let (grid, rep, fv) = solver_pair(&s, cfg, n)?;
        fit_rows.push((n, grid.h(), l2_gap(&rep, &fv)?));
        finest = Some((grid, rep, fv));
    }
    let (grid, rep, fv) = finest.expect("levels are non-empty");
    check_hypotheses(&s, &grid, force)?;
    let noise = match c.noise {
        Some(v) => v,
        None if fit_rows.len() >= 2 && fit_rows.iter().all(|r| r.2 > 0.0) => {
            let hs: Vec<f64> = fit_rows.iter().map(|r| r.1).collect();
            let gaps: Vec<f64> = fit_rows.iter().map(|r| r.2).collect();
            let (k, p) = fit::power_law(&hs, &gaps)?;
            k * grid.h().powf(p)
        }
        None => fit_rows.last().expect("non-empty").2,
    };
    let mut opts = CertifyOptions::new(noise);
    if let Some(v) = &c.lambda_factors {
        opts.lambda_factors = v.clone();
    }
    if let Some(v) = &c.radii {
        opts.radii = v.clone();
    }
    if let Some(v) = &c.deltas {
        opts.deltas = v.clone();
    }
    let cert = match c.pair {
        Pair::RepresentationFv => gronwall::certify_uniqueness(&s.name, &rep, &fv, &s.b, &s.dec, &grid, &opts)?,
        Pair::Bump => {
            let center = c.bump_center.clone().unwrap_or_else(|| vec![0.0; s.dim()]);
            if center.len() != s.dim() {
                return Err(Error::Config("bump_center has the wrong dimension".into()));
            }
            let t_star = c.bump_time * s.domain.horizon();
            let bumped = inject_bump(&fv, t_star, &center, c.bump_mass);
            gronwall::certify_uniqueness(&s.name, &fv, &bumped, &s.b, &s.dec, &grid, &opts)?
        }
    };
    Ok((cert, NoiseFit { levels: fit_rows, noise }))
}

pub fn certify(cfg: &Config, out: &Path, force: bool) -> Result<Certificate> {
    let started = Instant::now();
    let (cert, noise) = certificate(cfg, force)?;
    csvio::write_certificate(&cert, create(out, "certificate.csv")?)?;
    let mut w = csv::Writer::from_writer(create(out, "noise_fit.csv")?);
    w.write_record(["n", "h", "l2_gap"])?;
    for (n, h, g) in &noise.levels {
        w.write_record([n.to_string(), format!("{h:?}"), format!("{g:?}")])?;
    }
    w.write_record(["fitted".to_string(), String::new(), format!("{:?}", noise.noise)])?;
    w.flush()?;
    manifest(out, "certify", cfg, started, &[("verdict", cert.verdict.as_str().to_string())])?;
    Ok(cert)
}
